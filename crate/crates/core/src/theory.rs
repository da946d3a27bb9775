//! Closed-form landscape thresholds, the effective strong convexity
//! constant with an independent min-max oracle, and error bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn check_ranks(r: usize, r_star: usize) -> Result<()> {
    if r_star == 0 || r < r_star {
        return Err(invalid(format!("need r >= r_star >= 1, got r = {r}, r_star = {r_star}")));
    }
    Ok(())
}

/// `1 / (1 + sqrt(r*/r))`.
pub fn delta_crit(r: usize, r_star: usize) -> Result<f64> {
    check_ranks(r, r_star)?;
    Ok(1.0 / (1.0 + (r_star as f64 / r as f64).sqrt()))
}

/// `1 + 2 sqrt(r/r*)`, equal to `(1 + delta_crit) / (1 - delta_crit)`.
pub fn kappa_crit(r: usize, r_star: usize) -> Result<f64> {
    check_ranks(r, r_star)?;
    Ok(1.0 + 2.0 * (r as f64 / r_star as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub r: usize,
    pub r_star: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(default)]
    pub lambda: f64,
    /// `||grad phi(M*)||_op`.
    #[serde(default)]
    pub noise_opnorm: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        check_ranks(self.r, self.r_star)?;
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !(ok(self.mu) && ok(self.l) && ok(self.l2) && ok(self.lambda) && ok(self.noise_opnorm)) {
            return Err(invalid("mu, L, L2, lambda and noise must be finite and non-negative"));
        }
        if self.l <= 0.0 || self.mu > self.l || self.l2 > self.l {
            return Err(invalid(format!(
                "need 0 <= mu <= L, 0 <= L2 <= L and L > 0 (mu = {}, L = {}, L2 = {})",
                self.mu, self.l, self.l2
            )));
        }
        Ok(())
    }

    /// `rho = sqrt(r / r*)`.
    pub fn rho(&self) -> f64 {
        (self.r as f64 / self.r_star as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEff {
    pub value: f64,
    /// Smallest `mu` for which the effective constant is positive:
    /// `L2 / (2 rho + L2 / L)`.
    pub mu_threshold: f64,
    /// `mu > mu_threshold`.
    pub feasible: bool,
}

/// `mu_eff = (sqrt((L+mu)^2 + (r*/r) L2^2) - sqrt(r*/r) L2 - (L - mu)) / 2`.
pub fn mu_eff_closed(p: &TheoryParams) -> Result<MuEff> {
    p.validate()?;
    let inv_rho = 1.0 / p.rho();
    let value = 0.5 * (((p.l + p.mu).powi(2) + (inv_rho * p.l2).powi(2)).sqrt() - inv_rho * p.l2 - (p.l - p.mu));
    let mu_threshold = p.l2 / (2.0 * p.rho() + p.l2 / p.l);
    Ok(MuEff { value, mu_threshold, feasible: p.mu > mu_threshold })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Inner maximizer `t1` at the minimizing `(alpha, beta)`.
    pub t1: f64,
}

/// Inner maximum over `t1 >= t2 >= 0`, `(1 - a^2) t1^2 + a^2 t2^2 = 1`, of
/// `c [(1 - a^2) t1 + a^2 t2] - t2 L2 a b` with `c = (L + mu) / 2`; returns `(F, t1)`.
fn inner_max(c: f64, l2: f64, a: f64, b: f64) -> (f64, f64) {
    if l2 == 0.0 || a == 0.0 || a >= 1.0 {
        return (c, 1.0);
    }
    let s = (1.0 - a * a).sqrt();
    if l2 * b >= c * a {
        (c * s, 1.0 / s)
    } else {
        let f = (c * c - 2.0 * c * l2 * a * b + l2 * l2 * b * b).max(0.0).sqrt();
        (f, c / f)
    }
}

/// Largest feasible `beta` for a given `alpha`: the constraint
/// `a^2 + rho^2 b^2 <= 1 + (b - a)_+^2` cut along `b`.
fn beta_max(a: f64, rho: f64) -> Option<f64> {
    if (rho * rho + 1.0) * a * a >= 1.0 {
        return Some((1.0 - a * a).max(0.0).sqrt() / rho);
    }
    let q = rho * rho - 1.0;
    if q.abs() < 1e-15 {
        return (a > 0.0).then(|| 0.5 / a);
    }
    Some((-a + (a * a + q).sqrt()) / q)
}

fn feasible(a: f64, b: f64, rho: f64) -> bool {
    a * a + rho * rho * b * b <= 1.0 + (b - a).max(0.0).powi(2) + 1e-15
}

/// Brute-force min-max: outer grid over `(alpha, beta)` in `[0,1]^2`
/// restricted to the feasible set, plus the exact feasible boundary in
/// `beta` for every grid `alpha`; inner maximum by the exact case split.
pub fn mu_eff_oracle(p: &TheoryParams, grid_n: usize) -> Result<OracleResult> {
    p.validate()?;
    if grid_n < 100 {
        return Err(invalid("grid_n must be at least 100"));
    }
    let rho = p.rho();
    let c = 0.5 * (p.l + p.mu);
    let shift = 0.5 * (p.l - p.mu);
    let mut best = OracleResult { value: f64::INFINITY, alpha: 0.0, beta: 0.0, t1: 1.0 };
    let mut consider = |a: f64, b: f64| {
        let (f, t1) = inner_max(c, p.l2, a, b);
        if f - shift < best.value {
            best = OracleResult { value: f - shift, alpha: a, beta: b, t1 };
        }
    };
    let h = 1.0 / (grid_n - 1) as f64;
    for i in 0..grid_n {
        let a = i as f64 * h;
        for j in 0..grid_n {
            let b = j as f64 * h;
            if feasible(a, b, rho) {
                consider(a, b);
            }
        }
        if let Some(b) = beta_max(a, rho) {
            consider(a, b);
        }
    }
    Ok(best)
}

/// An error bound that is `+inf` exactly when its hypothesis fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    #[serde(with = "crate::serde_mat::maybe_inf")]
    pub value: f64,
    pub hypothesis_feasible: bool,
    pub denominator: f64,
}

fn bound(numerator: f64, denominator: f64, feasible: bool) -> Bound {
    let ok = feasible && denominator > 0.0;
    Bound {
        value: if ok { numerator / denominator } else { f64::INFINITY },
        hypothesis_feasible: ok,
        denominator,
    }
}

fn numerator(r: usize, r_star: usize, lambda: f64, noise: f64) -> f64 {
    6.0 * (r_star as f64).sqrt() * lambda + ((r + r_star) as f64).sqrt() * (noise - lambda).max(0.0)
}

/// `(6 sqrt(r*) lambda + sqrt(r + r*) (noise - lambda)_+) / mu_eff`.
pub fn error_bound_thm3(p: &TheoryParams) -> Result<Bound> {
    let m = mu_eff_closed(p)?;
    Ok(bound(numerator(p.r, p.r_star, p.lambda, p.noise_opnorm), m.value, m.feasible))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm2Bound {
    pub bound: Bound,
    /// `mu_eff(1 - delta, 1 + delta, 1 + delta) >= delta_crit - delta` at this `delta`.
    pub chain_holds: bool,
}

/// `(6 sqrt(r*) lambda + sqrt(r + r*) (noise - lambda)_+) / (delta_crit - delta_k)`.
pub fn error_bound_thm2(r: usize, r_star: usize, delta_k: f64, lambda: f64, noise_opnorm: f64) -> Result<Thm2Bound> {
    let dc = delta_crit(r, r_star)?;
    if !(0.0..1.0).contains(&delta_k) || lambda < 0.0 || noise_opnorm < 0.0 {
        return Err(invalid("need 0 <= delta_k < 1 and non-negative lambda, noise"));
    }
    let (mu, l) = rip_to_constants(delta_k)?;
    let me = mu_eff_closed(&TheoryParams { r, r_star, mu, l, l2: l, lambda, noise_opnorm })?;
    let gap = dc - delta_k;
    Ok(Thm2Bound {
        bound: bound(numerator(r, r_star, lambda, noise_opnorm), gap, gap > 0.0),
        chain_holds: gap <= 0.0 || me.value >= gap - 1e-12,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1 {
    /// `sqrt(r* + (1 - lambda/noise)_+^2 r) * noise`.
    pub exact_error: f64,
    /// `(sqrt(r*) lambda + sqrt(r + r*) (noise - lambda)_+) / sqrt(2)`.
    pub lower_bound: f64,
    pub dominates: bool,
}

pub fn example1_lower_bound(r: usize, r_star: usize, lambda: f64, noise_opnorm: f64) -> Result<Example1> {
    check_ranks(r, r_star)?;
    if !(lambda >= 0.0 && lambda <= noise_opnorm) {
        return Err(invalid(format!("need 0 <= lambda <= noise, got lambda = {lambda}, noise = {noise_opnorm}")));
    }
    let shrink = if noise_opnorm > 0.0 { (1.0 - lambda / noise_opnorm).max(0.0) } else { 0.0 };
    let exact_error = (r_star as f64 + shrink * shrink * r as f64).sqrt() * noise_opnorm;
    let lower_bound = ((r_star as f64).sqrt() * lambda
        + ((r + r_star) as f64).sqrt() * (noise_opnorm - lambda).max(0.0))
        / 2f64.sqrt();
    Ok(Example1 { exact_error, lower_bound, dominates: exact_error >= lower_bound * (1.0 - 1e-15) })
}

/// `(mu, L) = (1 - delta, 1 + delta)`.
pub fn rip_to_constants(delta_k: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&delta_k) {
        return Err(invalid(format!("delta = {delta_k} must lie in [0, 1)")));
    }
    Ok((1.0 - delta_k, 1.0 + delta_k))
}

/// `delta = (L - mu) / (L + mu)`.
pub fn constants_to_delta(mu: f64, l: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu <= l && l > 0.0) {
        return Err(invalid(format!("need 0 <= mu <= L and L > 0, got mu = {mu}, L = {l}")));
    }
    Ok((l - mu) / (l + mu))
}
