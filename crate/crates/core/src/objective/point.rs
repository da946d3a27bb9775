use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::gaussian_matrix;

/// A factored candidate: `(U, V)` with `M = U V^T`, or `U` alone with
/// `M = U U^T` in symmetric mode.
///
/// The same type carries gradients and search directions, which live in the
/// same space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPoint {
    #[serde(with = "crate::serde_mat")]
    pub u: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::opt", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<DMatrix<f64>>,
}

impl FactorPoint {
    pub fn asymmetric(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(dim_err(format!("U has {} columns but V has {}", u.ncols(), v.ncols())));
        }
        Ok(Self { u, v: Some(v) })
    }

    pub fn symmetric(u: DMatrix<f64>) -> Self {
        Self { u, v: None }
    }

    /// Gaussian entries scaled by `scale / sqrt(max(d1, d2))`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d1: usize, d2: usize, r: usize, symmetric: bool, scale: f64) -> Self {
        let s = scale / (d1.max(d2) as f64).sqrt();
        let u = gaussian_matrix(rng, d1, r) * s;
        if symmetric {
            Self::symmetric(u)
        } else {
            Self { u, v: Some(gaussian_matrix(rng, d2, r) * s) }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.v.is_none()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn v_or_u(&self) -> &DMatrix<f64> {
        self.v.as_ref().unwrap_or(&self.u)
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v_or_u().transpose()
    }

    /// Number of free parameters: `r (d1 + d2)` or `r d`.
    pub fn dim(&self) -> usize {
        self.u.len() + self.v.as_ref().map_or(0, |v| v.len())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            u: DMatrix::zeros(self.u.nrows(), self.u.ncols()),
            v: self.v.as_ref().map(|v| DMatrix::zeros(v.nrows(), v.ncols())),
        }
    }

    pub fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        Self {
            u: gaussian_matrix(rng, self.u.nrows(), self.u.ncols()),
            v: self.v.as_ref().map(|v| gaussian_matrix(rng, v.nrows(), v.ncols())),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.u.shape() == other.u.shape()
            && match (&self.v, &other.v) {
                (None, None) => true,
                (Some(a), Some(b)) => a.shape() == b.shape(),
                _ => false,
            }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(dim_err("factor blocks have different shapes"))
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let mut s = self.u.dot(&other.u);
        if let (Some(a), Some(b)) = (&self.v, &other.v) {
            s += a.dot(b);
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { u: &self.u * a, v: self.v.as_ref().map(|v| v * a) }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, other: &Self, a: f64) -> Self {
        Self {
            u: &self.u + &other.u * a,
            v: match (&self.v, &other.v) {
                (Some(x), Some(y)) => Some(x + y * a),
                (x, _) => x.clone(),
            },
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.u += &other.u * a;
        if let (Some(x), Some(y)) = (&mut self.v, &other.v) {
            *x += y * a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|x| x.is_finite()) && self.v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Stacked column-major coordinates `[vec(U); vec(V)]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(self.u.as_slice());
        if let Some(v) = &self.v {
            out.extend_from_slice(v.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`Self::to_vector`] using `self` as the shape template.
    pub fn from_vector_like(&self, x: &DVector<f64>) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        let nu = self.u.len();
        let u = DMatrix::from_column_slice(self.u.nrows(), self.u.ncols(), &x.as_slice()[..nu]);
        let v = self
            .v
            .as_ref()
            .map(|v| DMatrix::from_column_slice(v.nrows(), v.ncols(), &x.as_slice()[nu..]));
        Ok(Self { u, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vector_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for sym in [false, true] {
            let p = FactorPoint::random(&mut rng, 4, if sym { 4 } else { 3 }, 2, sym, 1.0);
            let back = p.from_vector_like(&p.to_vector()).unwrap();
            assert_eq!(p, back);
            assert!((p.norm() - p.to_vector().norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = FactorPoint::random(&mut rng, 3, 5, 2, false, 1.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<FactorPoint>(&s).unwrap(), p);
    }

    #[test]
    fn symmetric_product_is_gram() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let p = FactorPoint::symmetric(u);
        assert_eq!(p.product(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }
}
