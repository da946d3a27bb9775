//! Search-rank sweep over random Gaussian instances, plus the shared CSV
//! writers. Every CSV starts with `#` lines holding the schema version and
//! the full resolved configuration, so a file can be replayed on its own.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use bmlasso::certify::{certify_point_with, error_vs_truth, CertifyOptions, HessMethod};
use bmlasso::objective::{FactorPoint, ProblemInstance};
use bmlasso::solver::{solve_factored_from, Method, SolverConfig, TraceRow};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{read_table, section};
use crate::output::SCHEMA;
use crate::{overlay, usage, CliResult, Failure};

pub const SWEEP_COLUMNS: [&str; 9] =
    ["r", "trial", "seed", "final_error", "final_objective", "grad_norm", "hess_min_eig", "certified", "wall_ms"];
pub const TRACE_COLUMNS: [&str; 4] = ["iter", "objective", "grad_norm", "tr_radius"];

/// ChaCha stream of the trial seed for the first initialization; start `s`
/// uses stream `STREAM_INIT + s`.
const STREAM_INIT: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyMode {
    /// Dense Hessian up to the library's size limit, Lanczos above it.
    Auto,
    Dense,
    #[default]
    Lanczos,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub d1: usize,
    pub d2: usize,
    pub r_star: usize,
    pub n: usize,
    pub lambda: f64,
    pub r_values: Vec<usize>,
    pub n_trials: usize,
    /// Trial `t` uses seed `seed + t` for every search rank.
    pub seed: u64,
    /// Spectrum of `M*`; all ones when absent.
    pub singular_values: Option<Vec<f64>>,
    pub symmetric: bool,
    /// Independent initializations per draw; the lowest objective is reported.
    pub starts_per_draw: usize,
    pub certify: CertifyMode,
    pub solver: SolverConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d1: 50,
            d2: 51,
            r_star: 2,
            n: 475,
            lambda: 1e-4,
            r_values: (1..=20).collect(),
            n_trials: 50,
            seed: 0,
            singular_values: None,
            symmetric: false,
            starts_per_draw: 1,
            certify: CertifyMode::Lanczos,
            solver: SolverConfig { max_iters: 2000, tr_max_cg: Some(100), ..SolverConfig::default() },
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> CliResult {
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(usage("r_values must be non-empty with every entry at least 1"));
        }
        if self.d1 == 0 || self.d2 == 0 || self.n == 0 || self.r_star == 0 {
            return Err(usage("d1, d2, n and r_star must be at least 1"));
        }
        if self.symmetric && self.d1 != self.d2 {
            return Err(usage("symmetric sweeps need d1 == d2"));
        }
        if self.r_star > self.d1.min(self.d2) {
            return Err(usage("r_star exceeds min(d1, d2)"));
        }
        if self.n_trials == 0 || self.starts_per_draw == 0 {
            return Err(usage("n_trials and starts_per_draw must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(usage("lambda must be finite and non-negative"));
        }
        if let Some(sv) = &self.singular_values {
            if sv.len() != self.r_star || sv.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(usage("singular_values needs r_star positive entries"));
            }
        }
        if self.solver.method == Method::ProxGrad {
            return Err(usage("sweeps run a factored solver; prox-grad is not allowed"));
        }
        self.solver.validate()?;
        Ok(())
    }

    fn spectrum(&self) -> Vec<f64> {
        self.singular_values.clone().unwrap_or_else(|| vec![1.0; self.r_star])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub r: usize,
    /// Trial index, or `mean` / `median` for summary rows.
    pub trial: String,
    pub seed: Option<u64>,
    pub final_error: f64,
    pub final_objective: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub certified: bool,
    pub wall_ms: f64,
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.r.to_string(),
            self.trial.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:e}", self.final_error),
            format!("{:e}", self.final_objective),
            format!("{:e}", self.grad_norm),
            format!("{:e}", self.hess_min_eig),
            self.certified.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

struct Trial {
    row: SweepRow,
    failure: Option<String>,
}

fn run_trial(cfg: &SweepConfig, r: usize, trial: usize) -> Trial {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let start = Instant::now();
    let outcome = (|| -> bmlasso::Result<(f64, f64, f64, f64, bool)> {
        let inst = ProblemInstance::gaussian_planted(cfg.d1, cfg.d2, cfg.n, &cfg.spectrum(), cfg.lambda, seed, cfg.symmetric)?;
        let mut best: Option<(FactorPoint, f64)> = None;
        for s in 0..cfg.starts_per_draw as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_INIT + s);
            let init = FactorPoint::random(&mut rng, cfg.d1, cfg.d2, r, cfg.symmetric, cfg.solver.init_scale);
            let res = solve_factored_from(&inst, init, &cfg.solver)?;
            if best.as_ref().is_none_or(|(_, f)| res.objective < *f) {
                best = res.point.map(|p| (p, res.objective));
            }
        }
        let (point, objective) = best.expect("starts_per_draw >= 1");
        let (err, _) = error_vs_truth(&point.product(), inst.m_star().expect("sweep instances carry M*"));
        let method = match cfg.certify {
            CertifyMode::None => {
                let gn = inst.factored().grad(&point)?.norm();
                return Ok((err, objective, gn, f64::NAN, false));
            }
            CertifyMode::Auto => None,
            CertifyMode::Dense => Some(HessMethod::DenseEig),
            CertifyMode::Lanczos => Some(HessMethod::IterativeLanczos),
        };
        let cert = certify_point_with(&inst, &point, None, &CertifyOptions { method, ..Default::default() })?;
        Ok((err, objective, cert.grad_norm, cert.hess_min_eig, cert.is_second_order()))
    })();
    let wall_ms = start.elapsed().as_millis() as f64;
    let (vals, failure) = match outcome {
        Ok(v) => (v, None),
        Err(e) => ((f64::NAN, f64::NAN, f64::NAN, f64::NAN, false), Some(e.to_string())),
    };
    let row = SweepRow {
        r,
        trial: trial.to_string(),
        seed: Some(seed),
        final_error: vals.0,
        final_objective: vals.1,
        grad_norm: vals.2,
        hess_min_eig: vals.3,
        certified: vals.4,
        wall_ms,
    };
    Trial { row, failure }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// `mean` and `median` rows over the finite entries of each column;
/// `certified` is true iff every trial was certified.
pub fn summarize(r: usize, rows: &[SweepRow]) -> [SweepRow; 2] {
    let col = |f: fn(&SweepRow) -> f64| -> Vec<f64> { rows.iter().map(f).filter(|x| x.is_finite()).collect() };
    let cols = [
        col(|x| x.final_error),
        col(|x| x.final_objective),
        col(|x| x.grad_norm),
        col(|x| x.hess_min_eig),
        col(|x| x.wall_ms),
    ];
    let all = !rows.is_empty() && rows.iter().all(|x| x.certified);
    let make = |name: &str, agg: fn(&[f64]) -> f64| SweepRow {
        r,
        trial: name.to_string(),
        seed: None,
        final_error: agg(&cols[0]),
        final_objective: agg(&cols[1]),
        grad_norm: agg(&cols[2]),
        hess_min_eig: agg(&cols[3]),
        certified: all,
        wall_ms: agg(&cols[4]),
    };
    [make("mean", mean), make("median", median)]
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
}

/// Runs every `(r, trial)` pair on `threads` workers and collects rows in
/// `(r, trial)` order, each block followed by its summary rows.
pub fn run_sweep(cfg: &SweepConfig, threads: usize, progress: bool) -> SweepOutput {
    let jobs: Vec<(usize, usize)> =
        cfg.r_values.iter().flat_map(|&r| (0..cfg.n_trials).map(move |t| (r, t))).collect();
    let slots: Vec<Mutex<Option<Trial>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(r, t)) = jobs.get(i) else { break };
                let trial = run_trial(cfg, r, t);
                if progress {
                    let row = &trial.row;
                    eprintln!(
                        "r = {r:>3} trial = {t:>3}: error {:.3e}, certified {}, {} ms",
                        row.final_error, row.certified, row.wall_ms
                    );
                }
                *slots[i].lock().unwrap() = Some(trial);
            });
        }
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut done = slots.into_iter().map(|m| m.into_inner().unwrap().expect("every job ran"));
    for &r in &cfg.r_values {
        let block: Vec<Trial> = done.by_ref().take(cfg.n_trials).collect();
        for t in &block {
            if let Some(msg) = &t.failure {
                failures.push(format!("r={r} trial={}: {msg}", t.row.trial));
            }
        }
        let block: Vec<SweepRow> = block.into_iter().map(|t| t.row).collect();
        let summary = summarize(r, &block);
        rows.extend(block);
        rows.extend(summary);
    }
    SweepOutput { rows, failures }
}

pub fn header_lines(command: &str, config: &Value) -> String {
    format!("# schema: {SCHEMA}\n# command: {command}\n# config: {config}\n")
}

fn csv_writer(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    })
}

pub fn write_sweep_csv(path: Option<&Path>, cfg: &SweepConfig, out: &SweepOutput) -> CliResult {
    let mut w = csv_writer(path)?;
    let config = serde_json::to_value(cfg).map_err(anyhow::Error::from)?;
    w.write_all(header_lines("sweep", &config).as_bytes())?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(SWEEP_COLUMNS).map_err(anyhow::Error::from)?;
        for row in &out.rows {
            c.write_record(row.record()).map_err(anyhow::Error::from)?;
        }
        c.flush()?;
    }
    for f in &out.failures {
        writeln!(w, "# failed: {f}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow], resolved: &Value) -> CliResult {
    let mut w = csv_writer(Some(path))?;
    w.write_all(header_lines("solve", resolved).as_bytes())?;
    let mut c = csv::Writer::from_writer(&mut w);
    c.write_record(TRACE_COLUMNS).map_err(anyhow::Error::from)?;
    for row in trace {
        c.write_record([
            row.iter.to_string(),
            format!("{:e}", row.objective),
            format!("{:e}", row.grad_norm),
            row.tr_radius.map(|x| format!("{x:e}")).unwrap_or_default(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    c.flush()?;
    Ok(())
}

/// The `# config:` header of a CSV written by this tool.
pub fn read_config_header(path: &Path) -> CliResult<Value> {
    let file = File::open(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some(json) = rest.trim_start().strip_prefix("config:") {
            return serde_json::from_str(json.trim()).map_err(|e| usage(format!("{}: bad config header: {e}", path.display())));
        }
    }
    Err(usage(format!("{} has no '# config:' header", path.display())))
}

/// Data rows of a sweep CSV as string records, `#` lines skipped.
pub fn read_sweep_records(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers().map_err(anyhow::Error::from)?.iter().map(String::from).collect();
    if header != SWEEP_COLUMNS {
        return Err(usage(format!("{} does not have the sweep columns", path.display())));
    }
    rdr.records()
        .map(|r| Ok(r.map_err(anyhow::Error::from)?.iter().map(String::from).collect()))
        .collect()
}

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Rerun the sweep recorded in this CSV's header and compare every
    /// column except `wall_ms`.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub quiet: bool,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub r_star: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated search ranks.
    #[arg(long, value_delimiter = ',')]
    pub r_values: Option<Vec<usize>>,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub singular_values: Option<Vec<f64>>,
    #[arg(long)]
    pub symmetric: Option<bool>,
    #[arg(long)]
    pub starts_per_draw: Option<usize>,
    #[arg(long, value_enum)]
    pub certify: Option<CertifyMode>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

/// `[solver]` keys overlaid on the sweep's solver defaults.
fn solver_section(table: &toml::Table) -> CliResult<SolverConfig> {
    let mut base = toml::Table::try_from(SweepConfig::default().solver).map_err(anyhow::Error::from)?;
    if let Some(v) = table.get("solver") {
        let t = v.as_table().ok_or_else(|| usage("config section [solver] must be a table"))?;
        base.extend(t.clone());
    }
    base.try_into().map_err(|e: toml::de::Error| usage(format!("config section [solver]: {e}")))
}

pub fn resolve(mut a: SweepArgs) -> CliResult<SweepConfig> {
    let table = read_table(a.config.as_deref())?;
    let file: SweepArgs = section(&table, "sweep")?;
    overlay!(a, file; d1, d2, r_star, n, lambda, r_values, n_trials, seed, singular_values, symmetric, starts_per_draw, certify, max_iters, grad_tol);
    let d = SweepConfig::default();
    let mut solver = solver_section(&table)?;
    if let Some(x) = a.max_iters {
        solver.max_iters = x;
    }
    if let Some(x) = a.grad_tol {
        solver.grad_tol = x;
    }
    let d1 = a.d1.unwrap_or(d.d1);
    let d2 = a.d2.unwrap_or(if a.symmetric == Some(true) { d1 } else { d.d2 });
    let r_star = a.r_star.unwrap_or(d.r_star);
    let n = a.n.unwrap_or(if (d1, d2, r_star) == (d.d1, d.d2, d.r_star) {
        d.n
    } else {
        (2.35 * r_star as f64 * (d1 + d2) as f64).ceil() as usize
    });
    let cfg = SweepConfig {
        d1,
        d2,
        r_star,
        n,
        lambda: a.lambda.unwrap_or(d.lambda),
        r_values: a.r_values.unwrap_or(d.r_values),
        n_trials: a.n_trials.unwrap_or(d.n_trials),
        seed: a.seed.unwrap_or(d.seed),
        singular_values: a.singular_values.or(d.singular_values),
        symmetric: a.symmetric.unwrap_or(d.symmetric),
        starts_per_draw: a.starts_per_draw.unwrap_or(d.starts_per_draw),
        certify: a.certify.unwrap_or(d.certify),
        solver,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(a: SweepArgs) -> CliResult {
    let threads = a.threads.unwrap_or_else(default_threads);
    let progress = !a.quiet;
    if let Some(src) = a.replay.clone() {
        let cfg: SweepConfig = serde_json::from_value(read_config_header(&src)?)
            .map_err(|e| usage(format!("{}: config header: {e}", src.display())))?;
        cfg.validate()?;
        let expected = read_sweep_records(&src)?;
        let out = run_sweep(&cfg, threads, progress);
        write_sweep_csv(a.out.as_deref(), &cfg, &out)?;
        let got: Vec<Vec<String>> = out.rows.iter().map(SweepRow::record).collect();
        let strip = |rows: &[Vec<String>]| -> Vec<Vec<String>> {
            rows.iter().map(|r| r[..SWEEP_COLUMNS.len() - 1].to_vec()).collect()
        };
        if strip(&expected) != strip(&got) {
            return Err(Failure::Check(format!("replay of {} differs from the recorded rows", src.display())));
        }
        eprintln!("replay of {} matches ({} rows)", src.display(), got.len());
        return Ok(());
    }
    let cfg = resolve(a.clone())?;
    let out = run_sweep(&cfg, threads, progress);
    write_sweep_csv(a.out.as_deref(), &cfg, &out)?;
    for row in out.rows.iter().filter(|r| r.trial == "mean") {
        eprintln!("r = {:>3}: mean error {:.4e}, all certified {}", row.r, row.final_error, row.certified);
    }
    if !out.failures.is_empty() {
        eprintln!("{} trial(s) failed; see the '# failed' lines", out.failures.len());
    }
    Ok(())
}
