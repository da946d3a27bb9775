use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::factored::Factored;
use crate::error::{dim_err, invalid, Result};
use crate::linalg::random_orthonormal;
use crate::matops::MeasurementOperator;

/// ChaCha stream of a seed that draws the planted matrix in [`ProblemInstance::gaussian_planted`].
pub const STREAM_TRUTH: u64 = 1;

/// A twice differentiable convex loss `phi` on `d1 x d2` matrices.
///
/// Only the least-squares loss of [`ProblemInstance`] ships; other losses
/// plug into [`Factored`] through this trait.
pub trait SmoothLoss {
    fn domain_shape(&self) -> (usize, usize);

    fn symmetric(&self) -> bool;

    fn value(&self, m: &DMatrix<f64>) -> Result<f64>;

    fn grad(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    fn value_grad(&self, m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        Ok((self.value(m)?, self.grad(m)?))
    }

    /// `Hess phi(M)[M_dot]`.
    fn hess_apply(&self, m: &DMatrix<f64>, m_dot: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// For `phi(M) = ||A(M) - b||^2 / 2`, the products of
    /// [`MeasurementOperator::tangent_products`]; other losses keep `None`.
    fn tangent_products(&self, _u: &DMatrix<f64>, _v: Option<&DMatrix<f64>>) -> Option<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        None
    }
}

/// Ground truth with `b = A(M*) + xi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Truth {
    #[serde(with = "crate::serde_mat")]
    pub m_star: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub xi: DVector<f64>,
}

/// `phi(M) = 1/2 ||A(M) - b||^2` together with the regularization weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemInstance {
    op: MeasurementOperator,
    #[serde(with = "crate::serde_mat::vector")]
    b: DVector<f64>,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Truth>,
}

impl ProblemInstance {
    pub fn new(op: MeasurementOperator, b: DVector<f64>, lambda: f64) -> Result<Self> {
        if b.len() != op.n() {
            return Err(dim_err(format!("b has length {}, operator has {} measurements", b.len(), op.n())));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda = {lambda} must be finite and non-negative")));
        }
        Ok(Self { op, b, lambda, truth: None })
    }

    /// Instance with `b = A(M*) + xi`.
    pub fn from_truth(op: MeasurementOperator, m_star: DMatrix<f64>, xi: DVector<f64>, lambda: f64) -> Result<Self> {
        let b = op.forward(&m_star)? + &xi;
        Self::new(op, b, lambda)?.with_truth(m_star, xi)
    }

    /// Gaussian operator from `seed`, noiseless observations of `M*` with
    /// the given singular values and Haar-random singular vectors drawn from
    /// stream [`STREAM_TRUTH`] of `seed` (`M* = U S U^T` when symmetric).
    pub fn gaussian_planted(
        d1: usize,
        d2: usize,
        n: usize,
        singular_values: &[f64],
        lambda: f64,
        seed: u64,
        symmetric: bool,
    ) -> Result<Self> {
        let op = MeasurementOperator::gaussian(d1, d2, n, seed, symmetric)?;
        let k = singular_values.len();
        if k > d1.min(d2) {
            return Err(invalid(format!("{k} singular values exceed min(d1, d2) = {}", d1.min(d2))));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_TRUTH);
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(singular_values));
        let u = random_orthonormal(&mut rng, d1, k);
        let m_star = if symmetric {
            &u * s * u.transpose()
        } else {
            &u * s * random_orthonormal(&mut rng, d2, k).transpose()
        };
        Self::from_truth(op, m_star, DVector::zeros(n), lambda)
    }

    pub fn with_truth(mut self, m_star: DMatrix<f64>, xi: DVector<f64>) -> Result<Self> {
        if xi.len() != self.b.len() {
            return Err(dim_err("noise vector length differs from b"));
        }
        let gap = (&self.b - self.op.forward(&m_star)? - &xi).norm();
        if gap > 1e-12 * self.b.norm().max(1.0) {
            return Err(invalid(format!("b - A(M*) - xi has norm {gap:.3e}")));
        }
        self.truth = Some(Truth { m_star, xi });
        Ok(self)
    }

    pub fn op(&self) -> &MeasurementOperator {
        &self.op
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut out = Self::new(self.op.clone(), self.b.clone(), lambda)?;
        out.truth = self.truth.clone();
        Ok(out)
    }

    pub fn is_symmetric(&self) -> bool {
        self.op.is_symmetric()
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub fn m_star(&self) -> Option<&DMatrix<f64>> {
        self.truth.as_ref().map(|t| &t.m_star)
    }

    pub fn factored(&self) -> Factored<'_, Self> {
        Factored::new(self, self.lambda)
    }

    fn residual(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.op.forward(m)? - &self.b)
    }
}

impl SmoothLoss for ProblemInstance {
    fn domain_shape(&self) -> (usize, usize) {
        self.op.domain_shape()
    }

    fn symmetric(&self) -> bool {
        self.op.is_symmetric()
    }

    fn value(&self, m: &DMatrix<f64>) -> Result<f64> {
        Ok(0.5 * self.residual(m)?.norm_squared())
    }

    fn grad(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.op.adjoint(&self.residual(m)?)
    }

    fn value_grad(&self, m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let res = self.residual(m)?;
        Ok((0.5 * res.norm_squared(), self.op.adjoint(&res)?))
    }

    fn hess_apply(&self, _m: &DMatrix<f64>, m_dot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.op.normal(m_dot)
    }

    fn tangent_products(&self, u: &DMatrix<f64>, v: Option<&DMatrix<f64>>) -> Option<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        self.op.tangent_products(u, v)
    }
}
