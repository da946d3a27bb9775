use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{op_norm, sym_min_eig, SortedSvd};
use crate::objective::{ProblemInstance, SmoothLoss};

/// Singular values below this fraction of `sigma_1` are treated as zero.
pub const SVD_RANK_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalMode {
    Asymmetric,
    Symmetric,
}

/// Optimality residuals for the convex problem at a candidate `M`.
///
/// Asymmetric: `Z = -grad phi(M) / lambda` must lie in the nuclear-norm
/// subdifferential, i.e. `P_T(Z) = U_bar V_bar^T` and `||P_perp(Z)||_op <= 1`.
/// Symmetric: complementarity `||(grad phi(M) + lambda I) M||_F` and dual
/// feasibility `(-lambda_min(grad phi(M) + lambda I))_+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalOptCertificate {
    pub mode: GlobalMode,
    pub lambda: f64,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal_excess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complementarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_infeasibility: Option<f64>,
    /// `||grad phi(M)||_F`, the whole test when `lambda = 0`.
    pub grad_norm: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn certify_convex_global(inst: &ProblemInstance, m: &DMatrix<f64>, tol: f64) -> Result<GlobalOptCertificate> {
    let lambda = inst.lambda();
    if inst.is_symmetric() {
        symmetric(inst, m, tol, lambda)
    } else {
        asymmetric(inst, m, tol, lambda)
    }
}

fn asymmetric(inst: &ProblemInstance, m: &DMatrix<f64>, tol: f64, lambda: f64) -> Result<GlobalOptCertificate> {
    let g = inst.grad(m)?;
    let grad_norm = g.norm();
    let svd = SortedSvd::new(m);
    let k = svd.rank(SVD_RANK_RTOL);
    let mut cert = GlobalOptCertificate {
        mode: GlobalMode::Asymmetric,
        lambda,
        rank: k,
        tangent_residual: None,
        orthogonal_excess: None,
        complementarity: None,
        dual_infeasibility: None,
        grad_norm,
        tol,
        passed: grad_norm <= tol,
    };
    if lambda == 0.0 {
        return Ok(cert);
    }
    let z = &g * (-1.0 / lambda);
    let ub = svd.leading_u(k);
    let vb = svd.leading_v(k);
    let pu = &ub * ub.transpose();
    let pv = &vb * vb.transpose();
    let pu_perp = DMatrix::identity(m.nrows(), m.nrows()) - &pu;
    let pv_perp = DMatrix::identity(m.ncols(), m.ncols()) - &pv;
    let z_perp = &pu_perp * &z * &pv_perp;
    let tangent = &z - &z_perp - &ub * vb.transpose();
    let tangent_residual = tangent.norm();
    let orthogonal_excess = (op_norm(&z_perp) - 1.0).max(0.0);
    cert.tangent_residual = Some(tangent_residual);
    cert.orthogonal_excess = Some(orthogonal_excess);
    cert.passed = tangent_residual <= tol && orthogonal_excess <= tol;
    Ok(cert)
}

fn symmetric(inst: &ProblemInstance, m: &DMatrix<f64>, tol: f64, lambda: f64) -> Result<GlobalOptCertificate> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lo < -tol {
        return Err(invalid(format!("candidate has eigenvalue {lo:.3e} below -tol")));
    }
    // project onto the PSD cone
    let mut m_psd = DMatrix::zeros(sym.nrows(), sym.ncols());
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        if e > 0.0 {
            let v = eig.eigenvectors.column(i);
            m_psd += v * v.transpose() * e;
        }
    }
    let g = inst.grad(&m_psd)?;
    let s = &g + DMatrix::identity(g.nrows(), g.ncols()) * lambda;
    let complementarity = (&s * &m_psd).norm();
    let dual_infeasibility = (-sym_min_eig(&s)).max(0.0);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let rank = eig.eigenvalues.iter().filter(|&&e| e > SVD_RANK_RTOL * top).count();
    Ok(GlobalOptCertificate {
        mode: GlobalMode::Symmetric,
        lambda,
        rank,
        tangent_residual: None,
        orthogonal_excess: None,
        complementarity: Some(complementarity),
        dual_infeasibility: Some(dual_infeasibility),
        grad_norm: g.norm(),
        tol,
        passed: complementarity <= tol && dual_infeasibility <= tol,
    })
}
