//! Local solvers for the factored objective and a proximal-gradient solver
//! for the convex nuclear-norm problem.

mod multistart;
mod prox;
mod trust_region;

pub use multistart::{multistart, multistart_around, Cluster, MultistartReport};
pub use prox::{solve_convex_prox, solve_convex_prox_from};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::{FactorPoint, ProblemInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    TrNewtonCg,
    ProxGrad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    /// Stop once `||grad f|| <= grad_tol * max(1, ||grad f(P0)||)`.
    pub grad_tol: f64,
    pub tr_initial_radius: f64,
    pub tr_max_radius: f64,
    /// Inner conjugate-gradient iteration cap; `None` means the problem dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_max_cg: Option<usize>,
    pub backtrack_shrink: f64,
    pub sufficient_decrease: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::TrNewtonCg,
            max_iters: 1000,
            grad_tol: 1e-9,
            tr_initial_radius: 1.0,
            tr_max_radius: 100.0,
            tr_max_cg: None,
            backtrack_shrink: 0.5,
            sufficient_decrease: 1e-4,
            seed: 0,
            init_scale: 1.0,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        for (name, x) in [
            ("grad_tol", self.grad_tol),
            ("tr_initial_radius", self.tr_initial_radius),
            ("tr_max_radius", self.tr_max_radius),
            ("sufficient_decrease", self.sufficient_decrease),
            ("init_scale", self.init_scale),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(invalid(format!("{name} = {x} must be positive and finite")));
            }
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(invalid("backtrack_shrink must lie in (0, 1)"));
        }
        if self.tr_max_cg == Some(0) {
            return Err(invalid("tr_max_cg must be at least 1"));
        }
        if self.tr_initial_radius > self.tr_max_radius {
            return Err(invalid("tr_initial_radius exceeds tr_max_radius"));
        }
        Ok(())
    }
}

/// One row of the per-iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_radius: Option<f64>,
    /// Model decrease of the attempted trust-region step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_decrease: Option<f64>,
    /// Model decrease of the Cauchy point for the same radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cauchy_decrease: Option<f64>,
    pub accepted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    /// Final factors; `None` for the convex solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<FactorPoint>,
    #[serde(with = "crate::serde_mat")]
    pub matrix: DMatrix<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

/// Random initialization `init_scale * N(0, 1) / sqrt(max(d1, d2))`, seeded by `config.seed`.
pub fn random_init(inst: &ProblemInstance, r: usize, config: &SolverConfig) -> FactorPoint {
    let (d1, d2) = inst.op().domain_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    FactorPoint::random(&mut rng, d1, d2, r, inst.is_symmetric(), config.init_scale)
}

pub fn solve_factored(inst: &ProblemInstance, r: usize, config: &SolverConfig) -> Result<SolveResult> {
    if r == 0 {
        return Err(invalid("search rank r must be at least 1"));
    }
    solve_factored_from(inst, random_init(inst, r, config), config)
}

pub fn solve_factored_from(inst: &ProblemInstance, init: FactorPoint, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    match config.method {
        Method::Gd => gradient_descent(inst, init, config),
        Method::TrNewtonCg => trust_region::solve(inst, init, config),
        Method::ProxGrad => Err(invalid("prox-grad solves the convex problem; use solve_convex_prox")),
    }
}

struct Trace {
    rows: Option<Vec<TraceRow>>,
}

impl Trace {
    fn new(enabled: bool) -> Self {
        Self { rows: enabled.then(Vec::new) }
    }

    fn push(&mut self, row: TraceRow) {
        if let Some(rows) = &mut self.rows {
            rows.push(row);
        }
    }
}

fn finish(point: FactorPoint, objective: f64, grad_norm: f64, iters: usize, converged: bool, trace: Trace) -> SolveResult {
    SolveResult {
        matrix: point.product(),
        point: Some(point),
        objective,
        grad_norm,
        iters,
        converged,
        trace: trace.rows,
    }
}

fn gradient_descent(inst: &ProblemInstance, init: FactorPoint, config: &SolverConfig) -> Result<SolveResult> {
    let f = inst.factored();
    let mut x = init;
    let (mut fx, mut g) = f.value_grad(&x)?;
    if !fx.is_finite() {
        return Err(Error::NonFinite { iter: 0 });
    }
    let target = config.grad_tol * g.norm().max(1.0);
    let mut trace = Trace::new(config.record_trace);
    let mut step = 1.0;
    let mut gn = g.norm();
    trace.push(TraceRow {
        iter: 0,
        objective: fx,
        grad_norm: gn,
        tr_radius: None,
        model_decrease: None,
        cauchy_decrease: None,
        accepted: true,
    });
    for iter in 1..=config.max_iters {
        if gn <= target {
            return Ok(finish(x, fx, gn, iter - 1, true, trace));
        }
        step *= 2.0;
        loop {
            let cand = x.add_scaled(&g, -step);
            let fc = f.value(&cand)?;
            if fc.is_finite() && fc <= fx - config.sufficient_decrease * step * gn * gn {
                x = cand;
                break;
            }
            step *= config.backtrack_shrink;
            if step < 1e-30 {
                return Ok(finish(x, fx, gn, iter - 1, false, trace));
            }
        }
        (fx, g) = f.value_grad(&x)?;
        if !fx.is_finite() {
            return Err(Error::NonFinite { iter });
        }
        gn = g.norm();
        trace.push(TraceRow {
            iter,
            objective: fx,
            grad_norm: gn,
            tr_radius: None,
            model_decrease: None,
            cauchy_decrease: None,
            accepted: true,
        });
    }
    let converged = gn <= target;
    Ok(finish(x, fx, gn, config.max_iters, converged, trace))
}
