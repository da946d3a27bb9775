use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bmlasso"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn data_lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

fn without_wall_ms(lines: &[String]) -> Vec<String> {
    lines.iter().map(|l| l.rsplit_once(',').map_or(l.clone(), |(a, _)| a.to_string())).collect()
}

const SMALL_SWEEP: &[&str] =
    &["sweep", "--d1", "8", "--d2", "9", "--r-star", "1", "--r-values", "1,2", "--n-trials", "2", "--quiet"];

#[test]
fn missing_required_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["theory", "--r-star", "1"])), 2);
    assert_eq!(code(&run(&["counterexample", "--family", "thm5", "--r-star", "1"])), 2);
    assert_eq!(code(&run(&["solve", "--r", "2"])), 2);
}

#[test]
fn invalid_values_are_usage_errors() {
    assert_eq!(code(&run(&["theory", "--r", "0", "--r-star", "1"])), 2);
    assert_eq!(code(&run(&["sweep", "--r-values", "0", "--quiet"])), 2);
    assert_eq!(code(&run(&["counterexample", "--family", "thm5", "--r", "4", "--r-star", "1", "--mu", "1.5"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
}

#[test]
fn broken_config_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[theory]\nr = \"four\"\n").unwrap();
    assert_eq!(code(&run(&["theory", "--config", cfg.to_str().unwrap()])), 2);
    std::fs::write(&cfg, "[theory\n").unwrap();
    assert_eq!(code(&run(&["theory", "--config", cfg.to_str().unwrap()])), 2);
    std::fs::write(&cfg, "[theory]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["theory", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn theory_reports_thresholds_and_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("theory.json");
    let o = run(&[
        "theory", "--r", "4", "--r-star", "1", "--mu", "0.8", "--L", "1", "--L2", "1", "--grid-n", "400", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("delta_crit = 0.666666666667"), "{stdout}");
    let v = read_json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "theory");
    assert!((v["delta_crit"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let p = bmlasso::theory::TheoryParams {
        r: 4,
        r_star: 1,
        mu: 0.8,
        l: 1.0,
        l2: 1.0,
        lambda: 0.0,
        noise_opnorm: 0.0,
    };
    let closed = bmlasso::theory::mu_eff_closed(&p).unwrap().value;
    assert!((v["mu_eff"]["value"].as_f64().unwrap() - closed).abs() < 1e-15);
    assert!((v["oracle"]["value"].as_f64().unwrap() - closed).abs() < 1e-5);
}

#[test]
fn config_values_fill_missing_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(&cfg, "[theory]\nr = 9\nr_star = 4\n").unwrap();
    let o = run(&["theory", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    // 1 / (1 + sqrt(4/9)) = 0.6
    assert!(String::from_utf8(o.stdout).unwrap().contains("delta_crit = 0.600000000000"));
    let o = run(&["theory", "--config", cfg.to_str().unwrap(), "--r", "4"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("delta_crit = 0.500000000000"));
}

#[test]
fn thm5_exit_code_follows_the_local_minimum_condition() {
    // (r, r*) = (4, 1): the spurious point is a local minimum iff mu <= 1/5
    let base = ["counterexample", "--family", "thm5", "--r", "4", "--r-star", "1", "--lambda", "0.1"];
    let o = run(&[&base[..], &["--mu", "0.15"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[&base[..], &["--mu", "0.25"]].concat());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stderr).unwrap().contains("Saddle"));
}

#[test]
fn counterexample_report_feeds_certify() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ce.json");
    let o = run(&[
        "counterexample", "--family", "thm6", "--r1", "2", "--r-star", "1", "--mu", "0.4", "--lambda", "0.05", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["report"]["passed"], true);
    let o = run(&["certify", "--instance", out.to_str().unwrap(), "--point", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn example2_family_exit_codes() {
    let base = ["counterexample", "--family", "example2", "--r-sp", "4", "--r-star", "1", "--d1", "6", "--d2", "7"];
    // kappa_crit(4, 1) = 5
    assert_eq!(code(&run(&[&base[..], &["--kappa", "5.5"]].concat())), 0);
    assert_eq!(code(&run(&[&base[..], &["--kappa", "4.5"]].concat())), 1);
}

#[test]
fn spur_gen_family_accepts_explicit_constants() {
    let o = run(&[
        "counterexample", "--family", "spur-gen", "--r-star", "1", "--r-max", "2", "--d", "4", "--c", "0.7", "--c-perp",
        "0.4", "--r", "2", "--lambda", "0.2", "--mode", "asym",
    ]);
    // c c_perp r* = 0.28 > 1 - 0.49 - 0.32 = 0.19: local minimum
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn solve_writes_report_and_trace() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.json");
    let trace = dir.path().join("trace.csv");
    let o = run(&[
        "solve", "--d1", "8", "--r-star", "1", "--r", "2", "--lambda", "0.01", "--seed", "4", "--out",
        out.to_str().unwrap(), "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["command"], "solve");
    assert_eq!(v["resolved"]["seed"], 4);
    assert_eq!(v["result"]["converged"], true);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("# schema: 1\n"));
    assert!(text.lines().any(|l| l.starts_with("# config: {")));
    let lines = data_lines(&trace);
    assert_eq!(lines[0], "iter,objective,grad_norm,tr_radius");
    assert!(lines.len() > 2);
    assert!(lines[1].starts_with("0,"));

    let o = run(&["certify", "--instance", out.to_str().unwrap(), "--point", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("SecondOrderCritical"));
}

#[test]
fn prox_method_certifies_global_optimum() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.json");
    let o = run(&[
        "solve", "--d1", "6", "--d2", "7", "--r-star", "1", "--lambda", "0.05", "--method", "prox-grad", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out)["global_certificate"]["passed"], true);
}

#[test]
fn sweep_csv_has_fixed_schema_and_summary_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[SMALL_SWEEP, &["--out", out.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut header = text.lines().take_while(|l| l.starts_with('#'));
    assert_eq!(header.next(), Some("# schema: 1"));
    assert_eq!(header.next(), Some("# command: sweep"));
    let cfg: Value = serde_json::from_str(header.next().unwrap().strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(cfg["r_values"], serde_json::json!([1, 2]));
    assert_eq!(cfg["n"], 40); // ceil(2.35 * 1 * 17)
    assert_eq!(cfg["solver"]["method"], "tr-newton-cg");

    let lines = data_lines(&out);
    assert_eq!(lines[0], "r,trial,seed,final_error,final_objective,grad_norm,hess_min_eig,certified,wall_ms");
    let trials: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    assert_eq!(trials.len(), 2 * (2 + 2));
    let labels: Vec<(&str, &str, &str)> = trials.iter().map(|t| (t[0], t[1], t[2])).collect();
    assert_eq!(
        labels,
        [
            ("1", "0", "0"),
            ("1", "1", "1"),
            ("1", "mean", ""),
            ("1", "median", ""),
            ("2", "0", "0"),
            ("2", "1", "1"),
            ("2", "mean", ""),
            ("2", "median", "")
        ]
    );
    for t in &trials {
        assert_eq!(t.len(), 9);
        for x in &t[3..7] {
            x.parse::<f64>().unwrap();
        }
        assert!(t[7] == "true" || t[7] == "false");
    }
    let err = |i: usize| trials[i][3].parse::<f64>().unwrap();
    assert!((err(2) - 0.5 * (err(0) + err(1))).abs() <= 1e-15 * err(2).max(1.0));
}

#[test]
fn sweep_is_deterministic_and_replayable() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (p, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&[SMALL_SWEEP, &["--out", p.to_str().unwrap(), "--threads", threads]].concat());
        assert_eq!(code(&o), 0);
    }
    assert_eq!(without_wall_ms(&data_lines(&a)), without_wall_ms(&data_lines(&b)));

    let c = dir.path().join("c.csv");
    let o = run(&["sweep", "--replay", a.to_str().unwrap(), "--out", c.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(without_wall_ms(&data_lines(&a)), without_wall_ms(&data_lines(&c)));

    // a tampered row is detected
    let text = std::fs::read_to_string(&a).unwrap();
    let line = text.lines().find(|l| l.starts_with("1,0,0,")).unwrap();
    let fields: Vec<&str> = line.split(',').collect();
    let mut changed = fields.clone();
    let bumped = format!("{:e}", fields[3].parse::<f64>().unwrap() * 2.0);
    changed[3] = &bumped;
    std::fs::write(&a, text.replace(line, &changed.join(","))).unwrap();
    assert_eq!(code(&run(&["sweep", "--replay", a.to_str().unwrap(), "--quiet", "--out", c.to_str().unwrap()])), 1);
}

#[test]
fn sweep_config_file_and_solver_table() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[sweep]\nd1 = 6\nd2 = 6\nr_star = 1\nr_values = [2]\nn_trials = 1\nsymmetric = true\ncertify = \"dense\"\n\n[solver]\nmax_iters = 300\n",
    )
    .unwrap();
    let out = dir.path().join("s.csv");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let json = text.lines().find_map(|l| l.strip_prefix("# config: ")).unwrap();
    let v: Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["symmetric"], true);
    assert_eq!(v["certify"], "dense");
    assert_eq!(v["solver"]["max_iters"], 300);
    // untouched solver keys keep the sweep defaults
    assert_eq!(v["solver"]["tr_max_cg"], 100);
    let rows = data_lines(&out);
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows[1].starts_with("2,0,0,"));
}

#[test]
fn threshold_sweep_matches_prediction() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("th.csv");
    let o = run(&[
        "threshold-sweep", "--r-sp", "1", "--r-star", "1", "--d1", "3", "--d2", "4", "--points", "9", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = data_lines(&out);
    assert_eq!(lines[0], "kappa_sp,kappa_crit,ratio,grad_norm,hess_min_eig,psd,predicted_psd");
    assert_eq!(lines.len(), 10);
    let psd: Vec<bool> = lines[1..].iter().map(|l| l.split(',').nth(5).unwrap() == "true").collect();
    assert!(!psd[0] && psd[8]);
}
