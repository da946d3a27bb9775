//! Exact instances with spurious local minima: the general construction with
//! a rank-one perturbed identity, its specializations at a prescribed
//! strong convexity level and at a larger search rank, and the unregularized
//! condition-number family.

mod example2;
mod verify;


pub use example2::{build_example2, example2_kappa_formula, Example2Instance};
pub use verify::{verify_instance, Clause, LocalStatus, VerificationReport, VerifyTols};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::random_orthonormal;
use crate::matops::{MeasurementOperator, Perturbation, RestrictedConstants};
use crate::objective::{FactorPoint, ProblemInstance};

/// Slack for the constraint `c^2 r* + c_perp^2 r_max = 1 - epsilon` and for
/// deciding equality in the spurious-point condition.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[serde(alias = "sym")]
    Symmetric,
    #[serde(alias = "asym")]
    Asymmetric,
}

impl Mode {
    pub fn is_symmetric(self) -> bool {
        self == Mode::Symmetric
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" | "symmetric" => Ok(Mode::Symmetric),
            "asym" | "asymmetric" => Ok(Mode::Asymmetric),
            _ => Err(invalid(format!("unknown mode {s:?} (expected sym or asym)"))),
        }
    }
}

/// How `c c_perp r*` compares with `1 - c^2 r* - c_perp^2 r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpurCond {
    Strict,
    Boundary,
    Violated,
}

impl SpurCond {
    pub fn holds(self) -> bool {
        self != SpurCond::Violated
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpurGenSpec {
    pub r_star: usize,
    pub r_max: usize,
    pub d: usize,
    pub epsilon: f64,
    pub c: f64,
    pub c_perp: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Search rank.
    pub r: usize,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Use `Q = [e_1 .. e_r*]`, `Q_perp = [e_{r*+1} ..]` instead of a random basis.
    #[serde(default)]
    pub coordinate_basis: bool,
}

impl SpurGenSpec {
    /// Spec with `epsilon = 1 - c^2 r* - c_perp^2 r_max`, seed 0 and a random basis.
    #[allow(clippy::too_many_arguments)]
    pub fn from_c(
        r_star: usize,
        r_max: usize,
        d: usize,
        c: f64,
        c_perp: f64,
        lambda: f64,
        r: usize,
        mode: Mode,
    ) -> Result<Self> {
        let epsilon = 1.0 - c * c * r_star as f64 - c_perp * c_perp * r_max as f64;
        let spec = Self { r_star, r_max, d, epsilon, c, c_perp, lambda, r, mode, seed: 0, coordinate_basis: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (rs, rm) = (self.r_star, self.r_max);
        if rs == 0 || rm < rs || self.d < rs + rm {
            return Err(invalid(format!("need 1 <= r_star <= r_max and d >= r_star + r_max (r_star = {rs}, r_max = {rm}, d = {})", self.d)));
        }
        if self.r < rs || self.r > rm {
            return Err(invalid(format!("search rank {} must lie in [r_star, r_max] = [{rs}, {rm}]", self.r)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon = {} must lie in (0, 1)", self.epsilon)));
        }
        if !(self.c_perp > 0.0 && self.c >= self.c_perp && self.c.is_finite()) {
            return Err(invalid(format!("need c >= c_perp > 0 (c = {}, c_perp = {})", self.c, self.c_perp)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be finite and non-negative"));
        }
        let gap = self.c * self.c * rs as f64 + self.c_perp * self.c_perp * rm as f64 - (1.0 - self.epsilon);
        if gap.abs() > CONSTRAINT_TOL {
            return Err(invalid(format!("c^2 r_star + c_perp^2 r_max differs from 1 - epsilon by {gap:.3e}")));
        }
        Ok(())
    }

    /// `(c c_perp r*, 1 - c^2 r* - c_perp^2 r)`.
    pub fn spur_sides(&self) -> (f64, f64) {
        let lhs = self.c * self.c_perp * self.r_star as f64;
        let rhs = 1.0 - self.c * self.c * self.r_star as f64 - self.c_perp * self.c_perp * self.r as f64;
        (lhs, rhs)
    }

    pub fn spur_cond(&self) -> SpurCond {
        let (lhs, rhs) = self.spur_sides();
        if (lhs - rhs).abs() <= CONSTRAINT_TOL {
            SpurCond::Boundary
        } else if lhs > rhs {
            SpurCond::Strict
        } else {
            SpurCond::Violated
        }
    }

    /// `mu_k = 1 - (c^2 min(k, r*) + c_perp^2 max(k - r*, 0))` for `k <= r* + r_max`.
    pub fn mu_k(&self, k: usize) -> f64 {
        let k = k.min(self.r_star + self.r_max);
        1.0 - self.c * self.c * k.min(self.r_star) as f64 - self.c_perp * self.c_perp * k.saturating_sub(self.r_star) as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleInstance {
    pub spec: SpurGenSpec,
    #[serde(with = "crate::serde_mat")]
    pub q: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub q_perp: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub g: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub m_star: DMatrix<f64>,
    pub a: f64,
    pub a_perp: f64,
    /// `x = c c_perp r* / (1 - c_perp^2 r)`, with `R^T R = x I_r`.
    pub x: f64,
    pub spur_cond: SpurCond,
    pub spurious_point: FactorPoint,
    /// `mu_k`, `L_k` for `k = 1 ..= r* + r_max`.
    pub predicted_constants: Vec<RestrictedConstants>,
    /// Operator, observations `b = A((1 + a) P_Q + a_perp P_Qperp)`, `lambda` and truth.
    pub problem: ProblemInstance,
}

impl CounterexampleInstance {
    pub fn op(&self) -> &MeasurementOperator {
        self.problem.op()
    }

    pub fn b(&self) -> &DVector<f64> {
        self.problem.b()
    }
}

fn orthonormal_blocks(spec: &SpurGenSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = spec.r_star + spec.r_max;
    let basis = if spec.coordinate_basis {
        DMatrix::identity(spec.d, k)
    } else {
        random_orthonormal(&mut ChaCha8Rng::seed_from_u64(spec.seed), spec.d, k)
    };
    (basis.columns(0, spec.r_star).into_owned(), basis.columns(spec.r_star, spec.r_max).into_owned())
}

pub fn build_spur_gen(spec: &SpurGenSpec) -> Result<CounterexampleInstance> {
    spec.validate()?;
    let (rs, rm, r) = (spec.r_star as f64, spec.r_max as f64, spec.r as f64);
    let (c, cp, lambda) = (spec.c, spec.c_perp, spec.lambda);
    let (q, q_perp) = orthonormal_blocks(spec);
    let p_q = &q * q.transpose();
    let p_perp = &q_perp * q_perp.transpose();
    let g = &p_q * c - &p_perp * cp;

    // [[1 - c^2 r*, c c_perp r_max], [c c_perp r*, 1 - c_perp^2 r_max]] [a; a_perp] = [lambda; lambda]
    let (m11, m12, m21, m22) = (1.0 - c * c * rs, c * cp * rm, c * cp * rs, 1.0 - cp * cp * rm);
    let det = m11 * m22 - m12 * m21;
    let a = lambda * (m22 - m12) / det;
    let a_perp = lambda * (m11 - m21) / det;

    let symmetric = spec.mode.is_symmetric();
    let op = MeasurementOperator::rank_one_perturbed(&g, Perturbation::FromG, symmetric)?;
    let xi = op.forward(&(&p_q * a + &p_perp * a_perp))?;
    let problem = ProblemInstance::from_truth(op, p_q.clone(), xi, lambda)?;

    let x = c * cp * rs / (1.0 - cp * cp * r);
    let u = q_perp.columns(0, spec.r).into_owned() * x.sqrt();
    let spurious_point = if symmetric {
        FactorPoint::symmetric(u)
    } else {
        FactorPoint::asymmetric(u.clone(), u)?
    };
    let predicted_constants = (1..=spec.r_star + spec.r_max)
        .map(|k| RestrictedConstants::new(k, spec.mu_k(k), 1.0, true, None))
        .collect();
    Ok(CounterexampleInstance {
        spec: spec.clone(),
        q,
        q_perp,
        g,
        m_star: p_q,
        a,
        a_perp,
        x,
        spur_cond: spec.spur_cond(),
        spurious_point,
        predicted_constants,
        problem,
    })
}

/// `1 / (1 + 2 sqrt(r / r*))`: at or below this strong convexity level the
/// construction below yields a spurious second-order critical point.
pub fn thm5_mu_threshold(r: usize, r_star: usize) -> f64 {
    1.0 / (1.0 + 2.0 * (r as f64 / r_star as f64).sqrt())
}

/// `r_max = r`, `epsilon = mu`, `c^2 r* = c_perp^2 r = (1 - mu)/2`.
///
/// Every `mu` in `(0, 1)` is accepted; whether the spurious point is a
/// second-order critical point is recorded in `spur_cond`.
pub fn build_thm5(r: usize, r_star: usize, d: usize, mu: f64, lambda: f64, mode: Mode) -> Result<CounterexampleInstance> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(invalid(format!("mu = {mu} must lie in (0, 1)")));
    }
    if r_star == 0 || r < r_star {
        return Err(invalid(format!("need r >= r_star >= 1, got r = {r}, r_star = {r_star}")));
    }
    let half = 0.5 * (1.0 - mu);
    let c = (half / r_star as f64).sqrt();
    let c_perp = (half / r as f64).sqrt();
    let spec = SpurGenSpec { r_star, r_max: r, d, epsilon: mu, c, c_perp, lambda, r, mode, seed: 0, coordinate_basis: false };
    let inst = build_spur_gen(&spec)?;
    let expect = half * (r_star as f64 / r as f64).sqrt();
    let (lhs, _) = spec.spur_sides();
    if (lhs - expect).abs() > CONSTRAINT_TOL {
        return Err(Error::Degenerate(format!("c c_perp r_star = {lhs} differs from {expect}")));
    }
    Ok(inst)
}

/// Search rank `r2 = ceil((r* mu + r1) / (1 - mu))` with `mu_{r1 + r*} = mu`.
pub fn build_thm6(r1: usize, r_star: usize, mu: f64, lambda: f64, mode: Mode) -> Result<CounterexampleInstance> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(invalid(format!("mu = {mu} must lie in (0, 1)")));
    }
    if r_star == 0 || r1 < r_star {
        return Err(invalid(format!("need r1 >= r_star >= 1, got r1 = {r1}, r_star = {r_star}")));
    }
    let (rs, r1f) = (r_star as f64, r1 as f64);
    let r2 = ((rs * mu + r1f) / (1.0 - mu) - 1e-12).ceil().max(r1f + 1.0) as usize;
    let r2f = r2 as f64;
    let coefficients = |eps: f64| {
        let cp2 = (mu - eps) / (r2f - r1f);
        let c2 = ((r2f / r1f) * (1.0 - mu) - (1.0 - eps)) / (rs * (r2f / r1f - 1.0));
        (c2, cp2)
    };
    let mut eps = mu / 2.0;
    let mut found = None;
    for _ in 0..200 {
        let (c2, cp2) = coefficients(eps);
        if c2 > 0.0 && (c2 * cp2).sqrt() * rs > eps + 1e-9 {
            found = Some((c2.sqrt(), cp2.sqrt()));
            break;
        }
        eps *= 0.5;
    }
    let (c, c_perp) = found.ok_or_else(|| Error::Degenerate("no epsilon satisfies c c_perp r_star > epsilon".into()))?;
    let spec = SpurGenSpec {
        r_star,
        r_max: r2,
        d: r_star + r2,
        epsilon: eps,
        c,
        c_perp,
        lambda,
        r: r2,
        mode,
        seed: 0,
        coordinate_basis: false,
    };
    let inst = build_spur_gen(&spec)?;
    let mu_check = spec.mu_k(r1 + r_star);
    if (mu_check - mu).abs() > CONSTRAINT_TOL {
        return Err(Error::Degenerate(format!("mu_(r1 + r_star) = {mu_check}, requested {mu}")));
    }
    Ok(inst)
}
