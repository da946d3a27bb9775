use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{MeasurementOperator, OperatorKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, singular_values, SortedSvd};

const REFINE_STEPS: usize = 50;

/// Restricted strong convexity / smoothness of `E -> ||A(E)||^2 / 2` over
/// matrices of rank at most `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedConstants {
    pub k: usize,
    pub mu_k: f64,
    #[serde(rename = "L_k")]
    pub l_k: f64,
    #[serde(with = "crate::serde_mat::maybe_inf")]
    pub kappa_k: f64,
    pub delta_k: f64,
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RestrictedConstants {
    pub fn new(k: usize, mu_k: f64, l_k: f64, exact: bool, note: Option<String>) -> Self {
        let mu_k = mu_k.max(0.0);
        let l_k = l_k.max(mu_k);
        let kappa_k = if mu_k > 0.0 { l_k / mu_k } else { f64::INFINITY };
        let delta_k = if l_k + mu_k > 0.0 { (l_k - mu_k) / (l_k + mu_k) } else { 0.0 };
        Self { k, mu_k, l_k, kappa_k, delta_k, exact, note }
    }
}

fn clamp_rank(op: &MeasurementOperator, k: usize) -> (usize, Option<String>) {
    let (d1, d2) = op.domain_shape();
    let kmax = d1.min(d2);
    if k > kmax {
        (kmax, Some(format!("rank {k} clamped to min(d1, d2) = {kmax}")))
    } else {
        (k, None)
    }
}

/// Closed-form constants of a rank-one perturbed identity:
/// `L_k = 1` and `mu_k = 1 - coeff * (sigma_1^2 + ... + sigma_k^2)` of `G/||G||`.
pub fn restricted_constants_exact(op: &MeasurementOperator, k: usize) -> Result<RestrictedConstants> {
    let (g, coeff) = op
        .rank_one_parts()
        .filter(|_| op.kind() == OperatorKind::RankOnePerturbedIdentity)
        .ok_or_else(|| Error::Unsupported("exact restricted constants need a rank-one perturbed identity".into()))?;
    if k == 0 {
        return Err(invalid("rank level k must be at least 1"));
    }
    let (k, note) = clamp_rank(op, k);
    let g_norm = g.norm();
    if g_norm == 0.0 || coeff == 0.0 {
        return Ok(RestrictedConstants::new(k, 1.0, 1.0, true, note));
    }
    let s = singular_values(&(g / g_norm));
    let top: f64 = s.iter().take(k).map(|x| x * x).sum();
    let mu = 1.0 - coeff * top;
    let mut l = 1.0;
    if op.domain_dim() == 1 {
        l = mu;
    } else if op.is_symmetric() && k == 1 {
        // rank-one symmetric E = +-uu^T cannot be orthogonal to a definite G
        let eig = SymmetricEigen::new(g / g_norm).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if lo > 0.0 || hi < 0.0 {
            let m = lo.abs().min(hi.abs());
            l = 1.0 - coeff * m * m;
        }
    }
    Ok(RestrictedConstants::new(k, mu, l, true, note))
}

/// Sampled one-sided bounds: the returned `mu_k` is at least the true value
/// and `L_k` at most the true value.
///
/// Random rank-`k` probes are followed by alternating power refinement from
/// the extreme probes; every evaluated ratio comes from a genuine rank-`k`
/// matrix.
pub fn restricted_constants_estimate(
    op: &MeasurementOperator,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RestrictedConstants> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("rank level k must be at least 1"));
    }
    let (k, note) = clamp_rank(op, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = (f64::INFINITY, DMatrix::zeros(0, 0));
    let mut hi = (f64::NEG_INFINITY, DMatrix::zeros(0, 0));
    for _ in 0..trials {
        let e = random_rank_k(op, k, &mut rng);
        let Some(q) = ratio(op, &e)? else { continue };
        if q < lo.0 {
            lo = (q, e.clone());
        }
        if q > hi.0 {
            hi = (q, e);
        }
    }
    if !lo.0.is_finite() {
        return Err(Error::Degenerate("all random probes vanished".into()));
    }
    let shift = 1.1 * op.normal_norm_estimate(100, seed ^ 0x5eed);
    let mu = refine(op, k, lo.1, lo.0, Some(shift))?;
    let l = refine(op, k, hi.1, hi.0, None)?;
    let note = Some(match note {
        Some(n) => format!("{n}; Monte-Carlo estimate"),
        None => "Monte-Carlo estimate".to_string(),
    });
    Ok(RestrictedConstants::new(k, mu, l, false, note))
}

fn random_rank_k(op: &MeasurementOperator, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (d1, d2) = op.domain_shape();
    let u = gaussian_matrix(rng, d1, k);
    if op.is_symmetric() {
        let w = gaussian_vector(rng, k);
        &u * DMatrix::from_diagonal(&w) * u.transpose()
    } else {
        let v = gaussian_matrix(rng, d2, k);
        // random column scaling so probes are not all well conditioned
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose()
    }
}

fn ratio(op: &MeasurementOperator, e: &DMatrix<f64>) -> Result<Option<f64>> {
    let n2 = e.norm_squared();
    if n2 == 0.0 || !n2.is_finite() {
        return Ok(None);
    }
    Ok(Some(op.forward(e)?.norm_squared() / n2))
}

/// Power refinement restricted to rank `k`. With `shift = Some(s)` the
/// iteration runs on `s I - A*A` and drives the ratio down.
fn refine(op: &MeasurementOperator, k: usize, start: DMatrix<f64>, start_ratio: f64, shift: Option<f64>) -> Result<f64> {
    let better = |a: f64, b: f64| if shift.is_some() { a < b } else { a > b };
    let mut best = start_ratio;
    let mut e = start;
    for step in 0..REFINE_STEPS {
        let next = if op.is_symmetric() {
            let mut y = op.normal(&e)?;
            if let Some(s) = shift {
                y = &e * s - y;
            }
            truncate_sym(&y, k)
        } else if step % 2 == 0 {
            let q = SortedSvd::new(&e).leading_v(k);
            let x = &e * &q;
            let mut y = op.normal(&(&x * q.transpose()))? * &q;
            if let Some(s) = shift {
                y = &x * s - y;
            }
            y * q.transpose()
        } else {
            let q = SortedSvd::new(&e).leading_u(k);
            let x = q.transpose() * &e;
            let mut y = q.transpose() * op.normal(&(&q * &x))?;
            if let Some(s) = shift {
                y = &x * s - y;
            }
            &q * y
        };
        let Some(r) = ratio(op, &next)? else { break };
        if better(r, best) {
            best = r;
        }
        e = &next / next.norm();
    }
    Ok(best)
}

fn truncate_sym(y: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((y + y.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let d = y.nrows();
    let mut out = DMatrix::zeros(d, d);
    for &i in order.iter().take(k) {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * eig.eigenvalues[i];
    }
    out
}
