use std::path::{Path, PathBuf};

use bmlasso::certify::{
    certify_convex_global, certify_point_with, error_vs_truth, CertifyOptions, CertifyTols, HessMethod,
};
use bmlasso::counterexamples::{
    build_example2, build_spur_gen, build_thm5, build_thm6, example2_kappa_formula, verify_instance, Clause, Mode,
    SpurGenSpec, VerificationReport, VerifyTols,
};
use bmlasso::objective::{FactorPoint, ProblemInstance};
use bmlasso::solver::{solve_factored, Method, SolverConfig};
use bmlasso::theory::{
    delta_crit, error_bound_thm2, error_bound_thm3, kappa_crit, mu_eff_closed, mu_eff_oracle, TheoryParams,
};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{read_table, require, section};
use crate::output::{envelope, to_value, write_json};
use crate::sweep::{header_lines, write_trace_csv};
use crate::{overlay, usage, CliResult, Failure};

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryArgs {
    /// TOML file; its [theory] table supplies defaults for the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub r_star: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Restricted smoothness (default 1).
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Cross-term smoothness (default L).
    #[arg(long = "L2")]
    #[serde(rename = "L2")]
    pub l2: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Operator norm of grad phi(M*).
    #[arg(long)]
    pub noise: Option<f64>,
    /// RIP constant for the isometry-based bound.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also evaluate the min-max oracle on this grid and check agreement.
    #[arg(long)]
    pub grid_n: Option<usize>,
}

pub fn theory(mut a: TheoryArgs) -> CliResult {
    let file: TheoryArgs = section(&read_table(a.config.as_deref())?, "theory")?;
    overlay!(a, file; r, r_star, mu, l, l2, lambda, noise, delta, grid_n);
    let r = require(a.r, "r")?;
    let r_star = require(a.r_star, "r_star")?;
    let dc = delta_crit(r, r_star)?;
    let kc = kappa_crit(r, r_star)?;
    let lambda = a.lambda.unwrap_or(0.0);
    let noise = a.noise.unwrap_or(0.0);
    println!("delta_crit = {dc:.12}");
    println!("kappa_crit = {kc:.12}");
    let mut body = json!({ "r": r, "r_star": r_star, "delta_crit": dc, "kappa_crit": kc });
    let mut failures = Vec::new();
    if let Some(mu) = a.mu {
        let l = a.l.unwrap_or(1.0);
        let p = TheoryParams { r, r_star, mu, l, l2: a.l2.unwrap_or(l), lambda, noise_opnorm: noise };
        let me = mu_eff_closed(&p)?;
        let bound = error_bound_thm3(&p)?;
        println!("mu_eff = {:.12} (positive for mu > {:.12}: {})", me.value, me.mu_threshold, me.feasible);
        println!("error bound = {}", fmt_bound(bound.value));
        body["params"] = to_value(&p)?;
        body["mu_eff"] = to_value(&me)?;
        body["error_bound"] = to_value(&bound)?;
        if let Some(grid_n) = a.grid_n {
            let o = mu_eff_oracle(&p, grid_n)?;
            let gap = (o.value - me.value).abs();
            println!("oracle mu_eff = {:.12} (grid {grid_n}, gap {gap:.2e})", o.value);
            if gap > 1e-5 {
                failures.push(format!("oracle differs from closed form by {gap:.3e}"));
            }
            body["oracle"] = to_value(&o)?;
        }
    }
    if let Some(delta) = a.delta {
        let t2 = error_bound_thm2(r, r_star, delta, lambda, noise)?;
        println!("isometry error bound = {}", fmt_bound(t2.bound.value));
        if !t2.chain_holds {
            failures.push("effective constant falls below delta_crit - delta".into());
        }
        body["isometry_bound"] = to_value(&t2)?;
    }
    body["passed"] = json!(failures.is_empty());
    write_json_opt(a.out.as_deref(), envelope("theory", body))?;
    check(failures)
}

fn fmt_bound(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12}")
    } else {
        "inf (hypothesis fails)".into()
    }
}

fn check(failures: Vec<String>) -> CliResult {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

fn write_json_opt(out: Option<&Path>, v: Value) -> CliResult {
    if let Some(p) = out {
        write_json(Some(p), &v)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Example2,
    Thm5,
    Thm6,
    SpurGen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
pub enum ModeArg {
    #[serde(alias = "symmetric")]
    #[value(alias = "symmetric")]
    Sym,
    #[serde(alias = "asymmetric")]
    #[value(alias = "asymmetric")]
    Asym,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sym => Mode::Symmetric,
            ModeArg::Asym => Mode::Asymmetric,
        }
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Symmetric (PSD) or asymmetric construction; default sym.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub r_star: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub r1: Option<usize>,
    #[arg(long)]
    pub r_sp: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c_perp: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use coordinate vectors for Q and Q_perp.
    #[arg(long)]
    pub coordinate_basis: Option<bool>,
}

pub fn counterexample(mut a: CounterexampleArgs) -> CliResult {
    let file: CounterexampleArgs = section(&read_table(a.config.as_deref())?, "counterexample")?;
    overlay!(a, file; family, mode, r, r_star, d, mu, lambda, r1, r_sp, d1, d2, kappa, r_max, c, c_perp, seed, coordinate_basis);
    let family = require(a.family, "family")?;
    let mode: Mode = a.mode.unwrap_or(ModeArg::Sym).into();
    let lambda = a.lambda.unwrap_or(0.0);
    let seed = a.seed.unwrap_or(0);
    if family == Family::Example2 {
        return example2(&a, seed);
    }
    let mut inst = match family {
        Family::Thm5 => {
            let r = require(a.r, "r")?;
            let r_star = require(a.r_star, "r_star")?;
            build_thm5(r, r_star, a.d.unwrap_or(r + r_star), require(a.mu, "mu")?, lambda, mode)?
        }
        Family::Thm6 => build_thm6(require(a.r1, "r1")?, require(a.r_star, "r_star")?, require(a.mu, "mu")?, lambda, mode)?,
        Family::SpurGen => {
            let r_star = require(a.r_star, "r_star")?;
            let r_max = require(a.r_max, "r_max")?;
            let spec = SpurGenSpec::from_c(
                r_star,
                r_max,
                a.d.unwrap_or(r_star + r_max),
                require(a.c, "c")?,
                require(a.c_perp, "c_perp")?,
                lambda,
                a.r.unwrap_or(r_max),
                mode,
            )?;
            build_spur_gen(&spec)?
        }
        Family::Example2 => unreachable!(),
    };
    if a.seed.is_some() || a.coordinate_basis.is_some() {
        let spec = SpurGenSpec { seed, coordinate_basis: a.coordinate_basis.unwrap_or(false), ..inst.spec.clone() };
        inst = build_spur_gen(&spec)?;
    }
    let report = verify_instance(&inst, &VerifyTols::default())?;
    print_report(&report);
    let body = json!({
        "family": family,
        "resolved": a,
        "instance": to_value(&inst)?,
        "report": to_value(&report)?,
    });
    write_json_opt(a.out.as_deref(), envelope("counterexample", body))?;
    if !report.consistent {
        return Err(Failure::Check(format!("clauses {:?} failed", report.failed_clauses())));
    }
    if !report.passed {
        return Err(Failure::Check(format!(
            "the candidate point is a {:?}, not a spurious second-order critical point (spur_cond {:?})",
            report.status, report.spur_cond
        )));
    }
    Ok(())
}

fn print_report(rep: &VerificationReport) {
    for c in &rep.clauses {
        println!("[{}] ({:>3}) {}: {}", if c.passed { "ok" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    println!("spur_cond: {:?}, status: {:?}", rep.spur_cond, rep.status);
    println!("error ||M_sp - M*||_F = {:.6}", rep.error);
}

fn example2(a: &CounterexampleArgs, seed: u64) -> CliResult {
    let r_sp = require(a.r_sp.or(a.r), "r_sp")?;
    let r_star = require(a.r_star, "r_star")?;
    let kappa = require(a.kappa, "kappa")?;
    let d1 = a.d1.unwrap_or(r_sp + r_star);
    let d2 = a.d2.unwrap_or(r_sp + r_star);
    let ex = build_example2(r_sp, r_star, d1, d2, kappa, seed)?;
    let cert = certify_point_with(
        &ex.problem,
        &ex.spurious_point,
        Some(CertifyTols { grad_tol: 1e-10, eig_tol: 1e-8 }),
        &CertifyOptions::default(),
    )?;
    let predicted_psd = kappa >= ex.kappa_crit;
    let psd = cert.hess_min_eig >= -1e-8;
    let profile_gap = ex
        .kappa_profile
        .iter()
        .map(|&(r, k)| (k - example2_kappa_formula(r, r_sp, kappa)).abs())
        .fold(0.0, f64::max);
    let clauses = vec![
        Clause {
            id: "i".into(),
            name: "spurious point is first-order critical".into(),
            passed: cert.grad_norm <= 1e-10,
            value: cert.grad_norm,
            detail: format!("||grad f|| = {:.3e}", cert.grad_norm),
        },
        Clause {
            id: "ii".into(),
            name: "Hessian PSD exactly when kappa_sp >= kappa_crit".into(),
            passed: psd == predicted_psd,
            value: cert.hess_min_eig,
            detail: format!("hess_min_eig = {:.3e}, kappa_sp = {kappa}, kappa_crit = {:.6}", cert.hess_min_eig, ex.kappa_crit),
        },
        Clause {
            id: "iii".into(),
            name: "restricted condition numbers match the closed form".into(),
            passed: profile_gap <= 1e-10,
            value: profile_gap,
            detail: format!("max deviation {profile_gap:.3e}"),
        },
    ];
    for c in &clauses {
        println!("[{}] ({:>3}) {}: {}", if c.passed { "ok" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    let consistent = clauses.iter().all(|c| c.passed);
    let body = json!({
        "family": Family::Example2,
        "resolved": a,
        "instance": to_value(&ex)?,
        "certificate": to_value(&cert)?,
        "report": { "clauses": clauses, "consistent": consistent, "passed": consistent && psd },
    });
    write_json_opt(a.out.as_deref(), envelope("counterexample", body))?;
    if !consistent {
        return Err(Failure::Check("example2 clauses failed".into()));
    }
    if !psd {
        return Err(Failure::Check(format!("kappa_sp = {kappa} < kappa_crit: the candidate point is a saddle")));
    }
    Ok(())
}

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    #[serde(skip)]
    pub trace: Option<PathBuf>,
    /// Stored instance JSON (a problem instance or a counterexample report).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r_star: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Seed of the Gaussian instance.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub symmetric: Option<bool>,
    /// Search rank.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Seed of the random initialization.
    #[arg(long)]
    pub init_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Gd,
    TrNewtonCg,
    ProxGrad,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gd => Method::Gd,
            MethodArg::TrNewtonCg => Method::TrNewtonCg,
            MethodArg::ProxGrad => Method::ProxGrad,
        }
    }
}

fn extract<T: DeserializeOwned>(v: &Value, paths: &[&str]) -> Option<T> {
    paths.iter().find_map(|p| {
        let node = if p.is_empty() { Some(v) } else { v.pointer(p) }?;
        serde_json::from_value(node.clone()).ok()
    })
}

pub fn load_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_instance(path: &Path) -> CliResult<ProblemInstance> {
    let v = load_json(path)?;
    extract(&v, &["", "/problem", "/instance/problem", "/instance"])
        .ok_or_else(|| usage(format!("{} holds no problem instance", path.display())))
}

pub fn solve(mut a: SolveArgs) -> CliResult {
    let table = read_table(a.config.as_deref())?;
    let file: SolveArgs = section(&table, "solve")?;
    overlay!(a, file; instance, d1, d2, n, r_star, lambda, seed, symmetric, r, method, max_iters, grad_tol, init_seed);
    let mut cfg: SolverConfig = section(&table, "solver")?;
    if let Some(m) = a.method {
        cfg.method = m.into();
    }
    if let Some(x) = a.max_iters {
        cfg.max_iters = x;
    }
    if let Some(x) = a.grad_tol {
        cfg.grad_tol = x;
    }
    if let Some(x) = a.init_seed {
        cfg.seed = x;
    }
    a.init_seed = Some(cfg.seed);
    a.method = Some(match cfg.method {
        Method::Gd => MethodArg::Gd,
        Method::TrNewtonCg => MethodArg::TrNewtonCg,
        Method::ProxGrad => MethodArg::ProxGrad,
    });
    a.max_iters = Some(cfg.max_iters);
    a.grad_tol = Some(cfg.grad_tol);
    cfg.record_trace |= a.trace.is_some();
    cfg.validate()?;
    let inst = match &a.instance {
        Some(p) => load_instance(p)?,
        None => {
            let d1 = require(a.d1, "d1")?;
            let d2 = a.d2.unwrap_or(d1);
            let r_star = require(a.r_star, "r_star")?;
            let n = a.n.unwrap_or_else(|| (2.35 * r_star as f64 * (d1 + d2) as f64).ceil() as usize);
            a.d2 = Some(d2);
            a.n = Some(n);
            let (lambda, seed, symmetric) = (a.lambda.unwrap_or(0.0), a.seed.unwrap_or(0), a.symmetric.unwrap_or(false));
            (a.lambda, a.seed, a.symmetric) = (Some(lambda), Some(seed), Some(symmetric));
            let sv = vec![1.0; r_star];
            ProblemInstance::gaussian_planted(d1, d2, n, &sv, lambda, seed, symmetric)?
        }
    };
    let res = if cfg.method == Method::ProxGrad {
        bmlasso::solver::solve_convex_prox(&inst, &cfg)?
    } else {
        solve_factored(&inst, require(a.r, "r")?, &cfg)?
    };
    println!(
        "objective = {:.12e}, ||grad|| = {:.3e}, iters = {}, converged = {}",
        res.objective, res.grad_norm, res.iters, res.converged
    );
    let mut body = json!({ "resolved": a, "solver": cfg, "result": to_value(&res)?, "problem": to_value(&inst)? });
    if let Some(m_star) = inst.m_star() {
        let (abs, rel) = error_vs_truth(&res.matrix, m_star);
        println!("error ||M - M*||_F = {abs:.6e} (relative {rel:.3e})");
        body["error"] = json!({ "frobenius": abs, "relative": rel });
    }
    if let Some(p) = &res.point {
        let cert = certify_point_with(&inst, p, None, &CertifyOptions::default())?;
        println!("certificate: {:?}, hess_min_eig = {:.3e}", cert.verdict, cert.hess_min_eig);
        body["certificate"] = to_value(&cert)?;
    } else {
        let g = certify_convex_global(&inst, &res.matrix, 1e-6 * (1.0 + inst.b().norm()))?;
        println!("convex global certificate passed: {}", g.passed);
        body["global_certificate"] = to_value(&g)?;
    }
    if let (Some(path), Some(trace)) = (&a.trace, &res.trace) {
        write_trace_csv(path, trace, &json!({ "resolved": body["resolved"], "solver": body["solver"] }))?;
        println!("wrote {}", path.display());
    }
    write_json_opt(a.out.as_deref(), envelope("solve", body))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HessArg {
    Dense,
    Lanczos,
}

#[derive(Args, Clone, Debug)]
pub struct CertifyArgs {
    /// Problem instance JSON (or any report embedding one).
    #[arg(long)]
    pub instance: PathBuf,
    /// Factor point JSON (or a solve/counterexample report embedding one).
    #[arg(long)]
    pub point: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<HessArg>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub eig_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn certify(a: CertifyArgs) -> CliResult {
    let inst = load_instance(&a.instance)?;
    let pv = load_json(&a.point)?;
    let point: FactorPoint = extract(&pv, &["", "/result/point", "/instance/spurious_point", "/spurious_point", "/point"])
        .ok_or_else(|| usage(format!("{} holds no factor point", a.point.display())))?;
    let mut tols = CertifyTols::default_for(&inst);
    if let Some(x) = a.grad_tol {
        tols.grad_tol = x;
    }
    if let Some(x) = a.eig_tol {
        tols.eig_tol = x;
    }
    let opts = CertifyOptions {
        method: a.method.map(|m| match m {
            HessArg::Dense => HessMethod::DenseEig,
            HessArg::Lanczos => HessMethod::IterativeLanczos,
        }),
        ..CertifyOptions::default()
    };
    let cert = certify_point_with(&inst, &point, Some(tols), &opts)?;
    println!(
        "||grad|| = {:.3e} (tol {:.1e}), hess_min_eig = {:.3e} (tol {:.1e}) via {:?}: {:?}",
        cert.grad_norm, cert.grad_tol, cert.hess_min_eig, cert.eig_tol, cert.method, cert.verdict
    );
    let mut body = json!({ "certificate": to_value(&cert)? });
    if let Some(m_star) = inst.m_star() {
        let (abs, rel) = error_vs_truth(&point.product(), m_star);
        body["error"] = json!({ "frobenius": abs, "relative": rel });
    }
    write_json_opt(a.out.as_deref(), envelope("certify", body))?;
    if cert.is_second_order() {
        Ok(())
    } else {
        Err(Failure::Check(format!("point is {:?}", cert.verdict)))
    }
}

#[derive(Args, Clone, Debug)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub r_sp: usize,
    #[arg(long)]
    pub r_star: usize,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    /// Smallest kappa_sp as a multiple of kappa_crit.
    #[arg(long, default_value_t = 0.95)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.05)]
    pub hi: f64,
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn threshold_sweep(a: ThresholdArgs) -> CliResult {
    if a.points < 2 || !(a.lo > 0.0 && a.lo < a.hi) {
        return Err(usage("need points >= 2 and 0 < lo < hi"));
    }
    let kc = kappa_crit(a.r_sp, a.r_star)?;
    let d1 = a.d1.unwrap_or(a.r_sp + a.r_star);
    let d2 = a.d2.unwrap_or(a.r_sp + a.r_star);
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["kappa_sp", "kappa_crit", "ratio", "grad_norm", "hess_min_eig", "psd", "predicted_psd"])
            .map_err(anyhow::Error::from)?;
        let mut mismatches = 0;
        for i in 0..a.points {
            let ratio = a.lo + (a.hi - a.lo) * i as f64 / (a.points - 1) as f64;
            let kappa = ratio * kc;
            if kappa <= 1.0 {
                continue;
            }
            let ex = build_example2(a.r_sp, a.r_star, d1, d2, kappa, a.seed)?;
            let cert = certify_point_with(&ex.problem, &ex.spurious_point, None, &CertifyOptions::default())?;
            let psd = cert.hess_min_eig >= -cert.eig_tol;
            let predicted = kappa >= kc;
            mismatches += (psd != predicted) as usize;
            w.write_record([
                format!("{kappa:e}"),
                format!("{kc:e}"),
                format!("{ratio:e}"),
                format!("{:e}", cert.grad_norm),
                format!("{:e}", cert.hess_min_eig),
                psd.to_string(),
                predicted.to_string(),
            ])
            .map_err(anyhow::Error::from)?;
        }
        w.flush()?;
        drop(w);
        let header = header_lines(
            "threshold-sweep",
            &json!({ "r_sp": a.r_sp, "r_star": a.r_star, "d1": d1, "d2": d2, "lo": a.lo, "hi": a.hi, "points": a.points, "seed": a.seed }),
        );
        let text = header + &String::from_utf8(buf.clone()).map_err(anyhow::Error::from)?;
        match &a.out {
            Some(p) => {
                std::fs::write(p, text)?;
                println!("wrote {} (kappa_crit = {kc:.6}, mismatches = {mismatches})", p.display());
            }
            None => print!("{text}"),
        }
        if mismatches > 0 {
            return Err(Failure::Check(format!("{mismatches} grid points disagree with the kappa_crit prediction")));
        }
    }
    Ok(())
}
