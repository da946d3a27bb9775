use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{solve_factored, solve_factored_from, SolveResult, SolverConfig};
use crate::error::{invalid, Result};
use crate::objective::{FactorPoint, ProblemInstance};

/// Relative tolerance for grouping terminal objective values.
pub const CLUSTER_RTOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub objective: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultistartReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<SolveResult>,
    /// `||M - M*||_F` per run when the instance carries ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
    pub best_objective: f64,
    pub frac_at_best: f64,
    /// Terminal objective values grouped within [`CLUSTER_RTOL`], lowest first.
    pub clusters: Vec<Cluster>,
}

/// Independent random starts with seeds `config.seed .. config.seed + n_starts`.
pub fn multistart(inst: &ProblemInstance, r: usize, config: &SolverConfig, n_starts: usize) -> Result<MultistartReport> {
    run_all(inst, config, n_starts, |cfg| solve_factored(inst, r, cfg))
}

/// Starts at `center` plus Gaussian perturbations of Frobenius norm `radius`.
pub fn multistart_around(
    inst: &ProblemInstance,
    center: &FactorPoint,
    radius: f64,
    config: &SolverConfig,
    n_starts: usize,
) -> Result<MultistartReport> {
    run_all(inst, config, n_starts, |cfg| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = center.random_like(&mut rng);
        let init = center.add_scaled(&d, radius / d.norm().max(f64::MIN_POSITIVE));
        solve_factored_from(inst, init, cfg)
    })
}

fn run_all<F>(inst: &ProblemInstance, config: &SolverConfig, n_starts: usize, mut solve: F) -> Result<MultistartReport>
where
    F: FnMut(&SolverConfig) -> Result<SolveResult>,
{
    if n_starts == 0 {
        return Err(invalid("n_starts must be at least 1"));
    }
    let mut seeds = Vec::with_capacity(n_starts);
    let mut runs = Vec::with_capacity(n_starts);
    for i in 0..n_starts as u64 {
        let cfg = SolverConfig { seed: config.seed.wrapping_add(i), ..config.clone() };
        seeds.push(cfg.seed);
        runs.push(solve(&cfg)?);
    }
    let errors = inst.m_star().map(|ms| runs.iter().map(|r| (&r.matrix - ms).norm()).collect());
    let best = runs.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
    let near = |a: f64, b: f64| (a - b).abs() <= CLUSTER_RTOL * a.abs().max(b.abs()).max(1.0);
    let at_best = runs.iter().filter(|r| near(r.objective, best)).count();

    let mut objs: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    objs.sort_by(f64::total_cmp);
    let mut clusters: Vec<Cluster> = Vec::new();
    for f in objs {
        match clusters.last_mut() {
            Some(c) if near(c.objective, f) => c.count += 1,
            _ => clusters.push(Cluster { objective: f, count: 1 }),
        }
    }
    Ok(MultistartReport {
        seeds,
        runs,
        errors,
        best_objective: best,
        frac_at_best: at_best as f64 / n_starts as f64,
        clusters,
    })
}
