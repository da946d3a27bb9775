use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{nuclear_norm, range_projector, singular_values, SortedSvd};
use crate::objective::FactorPoint;

const RANK_RTOL: f64 = 1e-10;

/// Geometry of the error `H = M - M*` relative to the tangent space at `M`.
///
/// `alpha = ||M_perp||_F / ||H||_F` and
/// `beta = sigma_r(M) / ||H||_F * ||M_perp||_* / ||M_perp||_F` (zero when
/// `M_perp = 0`), where `M_perp = P_U^perp M* P_V^perp` and `r` is the
/// number of factor columns. Requires `r >= rank(M*)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichardDiagnostics {
    pub alpha: f64,
    pub beta: f64,
    pub r: usize,
    pub r_star: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn richard_diagnostics(p: &FactorPoint, m_star: &DMatrix<f64>) -> Result<RichardDiagnostics> {
    let m = p.product();
    if m.shape() != m_star.shape() {
        return Err(dim_err("M and M* have different shapes"));
    }
    let h = &m - m_star;
    let h_norm = h.norm();
    if h_norm == 0.0 {
        return Err(Error::Degenerate("H = M - M* is zero".into()));
    }
    let r = p.rank();
    let r_star = SortedSvd::new(m_star).rank(RANK_RTOL);
    if r_star == 0 {
        return Err(Error::Degenerate("M* = 0 has no rank".into()));
    }
    if r < r_star {
        return Err(invalid(format!("the inequality needs r >= rank(M*), got r = {r} < {r_star}")));
    }
    let (d1, d2) = m.shape();
    let pu_perp = DMatrix::identity(d1, d1) - range_projector(&p.u, 1e-12);
    let pv_perp = DMatrix::identity(d2, d2) - range_projector(p.v_or_u(), 1e-12);
    let m_perp = &pu_perp * m_star * &pv_perp;
    let perp_f = m_perp.norm();
    let alpha = perp_f / h_norm;
    let sigma_r = singular_values(&m).get(r.saturating_sub(1)).copied().unwrap_or(0.0);
    let beta = if perp_f > RANK_RTOL * m_star.norm() {
        sigma_r / h_norm * nuclear_norm(&m_perp) / perp_f
    } else {
        0.0
    };
    let lhs = alpha * alpha + (r as f64 / r_star as f64) * beta * beta;
    let rhs = 1.0 + (beta - alpha).max(0.0).powi(2);
    Ok(RichardDiagnostics {
        alpha,
        beta,
        r,
        r_star,
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}
