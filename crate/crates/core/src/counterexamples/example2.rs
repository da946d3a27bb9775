use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::random_orthonormal;
use crate::matops::{restricted_constants_exact, MeasurementOperator, Perturbation};
use crate::objective::{FactorPoint, ProblemInstance};
use crate::theory::kappa_crit;

/// Unregularized instance whose operator has restricted condition number
/// `kappa_sp` at every rank `k >= r_sp + r*`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Example2Instance {
    pub r_sp: usize,
    pub r_star: usize,
    pub kappa_sp: f64,
    pub kappa_crit: f64,
    /// `c_sp^2 = ((kappa_sp - 1)/(kappa_sp + 1)) sqrt(r*/r_sp)`.
    pub c_sp: f64,
    #[serde(with = "crate::serde_mat")]
    pub g: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub m_star: DMatrix<f64>,
    pub spurious_point: FactorPoint,
    /// `(r, kappa_{r + r*})` for `r* <= r <= r_sp`, from the exact constants.
    pub kappa_profile: Vec<(usize, f64)>,
    pub problem: ProblemInstance,
}

/// `kappa_{r + r*} = 1 / (1 - (1 - 1/kappa_sp)(1 + r/r_sp)/2)`.
pub fn example2_kappa_formula(r: usize, r_sp: usize, kappa_sp: f64) -> f64 {
    1.0 / (1.0 - (1.0 - 1.0 / kappa_sp) * (1.0 + r as f64 / r_sp as f64) / 2.0)
}

/// `G = P Q^T / sqrt(2 r*) - P_perp Q_perp^T / sqrt(2 r_sp)` with `||G||_F = 1`,
/// normal operator `E - (1 - 1/kappa_sp) <G,E> G`, `M* = P Q^T`, and the
/// point `(c_sp P_perp, c_sp Q_perp)` at search rank `r_sp`.
pub fn build_example2(r_sp: usize, r_star: usize, d1: usize, d2: usize, kappa_sp: f64, seed: u64) -> Result<Example2Instance> {
    if r_star == 0 || r_sp < r_star {
        return Err(invalid(format!("need r_sp >= r_star >= 1, got r_sp = {r_sp}, r_star = {r_star}")));
    }
    if d1 < r_sp + r_star || d2 < r_sp + r_star {
        return Err(invalid(format!("need d1, d2 >= r_sp + r_star, got {d1} x {d2}")));
    }
    if !(kappa_sp > 1.0 && kappa_sp.is_finite()) {
        return Err(invalid(format!("kappa_sp = {kappa_sp} must be finite and > 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = random_orthonormal(&mut rng, d1, r_star + r_sp);
    let right = random_orthonormal(&mut rng, d2, r_star + r_sp);
    let (p, p_perp) = (left.columns(0, r_star), left.columns(r_star, r_sp));
    let (q, q_perp) = (right.columns(0, r_star), right.columns(r_star, r_sp));
    let m_star = p * q.transpose();
    let g = &m_star / (2.0 * r_star as f64).sqrt() - p_perp * q_perp.transpose() / (2.0 * r_sp as f64).sqrt();

    let op = MeasurementOperator::rank_one_perturbed(&g, Perturbation::Coefficient(1.0 - 1.0 / kappa_sp), false)?;
    let kappa_profile = (r_star..=r_sp)
        .map(|r| Ok((r, restricted_constants_exact(&op, r + r_star)?.kappa_k)))
        .collect::<Result<Vec<_>>>()?;
    let n = op.n();
    let problem = ProblemInstance::from_truth(op, m_star.clone(), DVector::zeros(n), 0.0)?;

    let c_sp = ((kappa_sp - 1.0) / (kappa_sp + 1.0) * (r_star as f64 / r_sp as f64).sqrt()).sqrt();
    let spurious_point = FactorPoint::asymmetric(p_perp * c_sp, q_perp * c_sp)?;
    Ok(Example2Instance {
        r_sp,
        r_star,
        kappa_sp,
        kappa_crit: kappa_crit(r_sp, r_star)?,
        c_sp,
        g,
        m_star,
        spurious_point,
        kappa_profile,
        problem,
    })
}
