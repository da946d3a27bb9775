//! Second-order criticality certificates, the alpha/beta error-geometry
//! diagnostics, and convex global-optimality certificates.

mod global;
mod lanczos;
mod richard;

pub use global::{certify_convex_global, GlobalMode, GlobalOptCertificate, SVD_RANK_RTOL};
pub use lanczos::{lanczos_min_eig, LanczosOptions, LanczosOutcome};
pub use richard::{richard_diagnostics, RichardDiagnostics};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::{FactorPoint, ProblemInstance};

/// Tangent dimensions up to this size use a dense Hessian.
pub const DENSE_HESSIAN_MAX_DIM: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SecondOrderCritical,
    FirstOrderOnly,
    NonCritical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessMethod {
    DenseEig,
    IterativeLanczos,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyTols {
    pub grad_tol: f64,
    pub eig_tol: f64,
}

impl CertifyTols {
    /// `grad_tol = 1e-8 (1 + ||b||)`, `eig_tol = 1e-8 (1 + L_est)` with
    /// `L_est` a power-iteration estimate of `||A*A||`.
    pub fn default_for(inst: &ProblemInstance) -> Self {
        let l_est = inst.op().normal_norm_estimate(100, 0);
        Self { grad_tol: 1e-8 * (1.0 + inst.b().norm()), eig_tol: 1e-8 * (1.0 + l_est) }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    /// Force a method instead of choosing by [`DENSE_HESSIAN_MAX_DIM`].
    pub method: Option<HessMethod>,
    pub lanczos: LanczosOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { method: None, lanczos: LanczosOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityCertificate {
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub grad_tol: f64,
    pub eig_tol: f64,
    pub verdict: Verdict,
    pub method: HessMethod,
}

impl CriticalityCertificate {
    pub fn is_second_order(&self) -> bool {
        self.verdict == Verdict::SecondOrderCritical
    }
}

pub fn verdict(grad_norm: f64, hess_min_eig: f64, tols: &CertifyTols) -> Verdict {
    if grad_norm > tols.grad_tol {
        Verdict::NonCritical
    } else if hess_min_eig >= -tols.eig_tol {
        Verdict::SecondOrderCritical
    } else {
        Verdict::FirstOrderOnly
    }
}

pub fn certify_point(inst: &ProblemInstance, p: &FactorPoint, tols: Option<CertifyTols>) -> Result<CriticalityCertificate> {
    certify_point_with(inst, p, tols, &CertifyOptions::default())
}

pub fn certify_point_with(
    inst: &ProblemInstance,
    p: &FactorPoint,
    tols: Option<CertifyTols>,
    opts: &CertifyOptions,
) -> Result<CriticalityCertificate> {
    let tols = tols.unwrap_or_else(|| CertifyTols::default_for(inst));
    let grad_norm = inst.factored().grad(p)?.norm();
    let method = opts.method.unwrap_or(if p.dim() <= DENSE_HESSIAN_MAX_DIM {
        HessMethod::DenseEig
    } else {
        HessMethod::IterativeLanczos
    });
    let hess_min_eig = match method {
        HessMethod::DenseEig => hess_min_eig_dense(inst, p)?,
        HessMethod::IterativeLanczos => hess_min_eig_lanczos(inst, p, opts.lanczos)?.min_eig,
    };
    Ok(CriticalityCertificate {
        grad_norm,
        hess_min_eig,
        grad_tol: tols.grad_tol,
        eig_tol: tols.eig_tol,
        verdict: verdict(grad_norm, hess_min_eig, &tols),
        method,
    })
}

/// The full Hessian assembled column by column from Hessian-vector products.
pub fn assemble_hessian(inst: &ProblemInstance, p: &FactorPoint) -> Result<DMatrix<f64>> {
    let lin = inst.factored().linearize(p)?;
    let n = p.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut e = nalgebra::DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        let col = lin.hvp(&p.from_vector_like(&e)?)?.to_vector();
        h.set_column(j, &col);
        e[j] = 0.0;
    }
    Ok((&h + h.transpose()) * 0.5)
}

pub fn hess_min_eig_dense(inst: &ProblemInstance, p: &FactorPoint) -> Result<f64> {
    let h = assemble_hessian(inst, p)?;
    Ok(SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn hess_min_eig_lanczos(inst: &ProblemInstance, p: &FactorPoint, opts: LanczosOptions) -> Result<LanczosOutcome> {
    let lin = inst.factored().linearize(p)?;
    lanczos_min_eig(p.dim(), |x| Ok(lin.hvp(&p.from_vector_like(x)?)?.to_vector()), opts)
}

/// `(||M - M*||_F, ||M - M*||_F / ||M*||_F)`; the ratio is infinite for `M* = 0`
/// unless `M = 0` too.
pub fn error_vs_truth(m: &DMatrix<f64>, m_star: &DMatrix<f64>) -> (f64, f64) {
    let e = (m - m_star).norm();
    let s = m_star.norm();
    let rel = if s > 0.0 {
        e / s
    } else if e == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (e, rel)
}
