//! Quadratic loss, factored objectives with gradients and Hessian-vector
//! products, and the convex nuclear-norm objective.

mod factored;
mod instance;
mod point;

pub use factored::{Factored, Linearization};
pub use instance::{ProblemInstance, SmoothLoss, Truth, STREAM_TRUTH};
pub use point::FactorPoint;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::Result;
use crate::linalg::{singular_values, SortedSvd};

pub fn phi_value(inst: &ProblemInstance, m: &DMatrix<f64>) -> Result<f64> {
    inst.value(m)
}

pub fn phi_grad(inst: &ProblemInstance, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    inst.grad(m)
}

pub fn f_value(inst: &ProblemInstance, p: &FactorPoint) -> Result<f64> {
    inst.factored().value(p)
}

pub fn f_grad(inst: &ProblemInstance, p: &FactorPoint) -> Result<FactorPoint> {
    inst.factored().grad(p)
}

pub fn f_hvp(inst: &ProblemInstance, p: &FactorPoint, dir: &FactorPoint) -> Result<FactorPoint> {
    inst.factored().linearize(p)?.hvp(dir)
}

pub fn f_hess_quadform(inst: &ProblemInstance, p: &FactorPoint, dir: &FactorPoint) -> Result<f64> {
    Ok(f_hvp(inst, p, dir)?.dot(dir))
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().sum()
}

/// Proximal map of `lambda * ||.||_*`: every singular value shrinks by `lambda`, floored at 0.
pub fn svd_soft_threshold(m: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let svd = SortedSvd::new(m);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &s) in svd.s.iter().enumerate() {
        let t = s - lambda;
        if t <= 0.0 {
            break;
        }
        out += svd.u.column(i) * svd.v.column(i).transpose() * t;
    }
    out
}

/// Proximal map of `lambda * tr(M)` restricted to PSD matrices: eigenvalues
/// shift down by `lambda` and are floored at 0.
pub fn psd_soft_threshold(m: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        let t = e - lambda;
        if t > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += v * v.transpose() * t;
        }
    }
    out
}

/// `phi(M) + lambda ||M||_*`; for PSD `M` the penalty equals `lambda tr(M)`.
pub fn convex_value(inst: &ProblemInstance, m: &DMatrix<f64>) -> Result<f64> {
    Ok(inst.value(m)? + inst.lambda() * nuclear_norm(m))
}

#[cfg(test)]
mod tests;
