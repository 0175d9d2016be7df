use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gfstop(args: &[&str], dir: &Path) -> Output {
    gfstop_env(args, dir, &[])
}

fn gfstop_env(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gfstop"));
    cmd.args(args).arg("--out").arg(dir).env_remove("GFSTOP_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn column(table: &[Vec<String>], name: &str) -> usize {
    table[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr has a record");
    serde_json::from_str(last).expect("last stderr line is JSON")
}

#[test]
fn pseudo_true_at_infinite_cutoff_is_the_truth() {
    let d = TempDir::new().unwrap();
    ok(&gfstop(&["pseudo-true", "--c", "inf,-1", "--mu2", "0.25"], d.path()));
    let t = rows(&read(d.path(), "pseudo-true.csv"));
    assert_eq!(t[0], ["c", "mu1_star", "mu2_star", "var1_star", "var2_star"]);
    assert_eq!(t[1][0], "inf");
    assert_eq!(t[1][2], "0.25");
    let meta: Value = serde_json::from_str(&read(d.path(), "pseudo-true.meta.json")).unwrap();
    assert_eq!(meta["config"]["c"][0], "inf");
    assert_eq!(meta["config"]["mu2"], 0.25);
}

#[test]
fn freddy_table_as_exact_fractions() {
    let d = TempDir::new().unwrap();
    ok(&gfstop(&["freddy", "--n", "8"], d.path()));
    let t = rows(&read(d.path(), "freddy.csv"));
    assert_eq!(t[1], ["aa", "1/28", "0.0357142857143", "3/14", "0.214285714286", "15/28", "0.535714285714"]);
    assert_eq!(t[5][0], "b_");
    assert_eq!(t[5][1], "3/4");
    let ll = rows(&read(d.path(), "freddy_loglik.csv"));
    let v: f64 = ll[1][2].parse().unwrap();
    assert!((v + 1.362).abs() < 1e-3);
}

#[test]
fn dynamics_beliefs_monotone_per_environment() {
    let d = TempDir::new().unwrap();
    ok(&gfstop(&["dynamics", "--generations", "40"], d.path()));
    let t = rows(&read(d.path(), "dynamics.csv"));
    let (env, mu2) = (column(&t, "env"), column(&t, "mu2"));
    for which in ["baseline", "auxiliary"] {
        let xs: Vec<f64> = t[1..].iter().filter(|r| r[env] == which).map(|r| r[mu2].parse().unwrap()).collect();
        assert_eq!(xs.len(), 40);
        assert!(xs.windows(2).all(|w| w[1] <= w[0]), "{which} not decreasing");
    }
}

#[test]
fn sidecar_replay_is_byte_identical() {
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    ok(&gfstop(&["sequential", "--rounds", "300", "--runs", "2", "--every", "50", "--seed", "9"], first.path()));
    ok(&gfstop(&["montecarlo", "--n", "50,200", "--reps", "300", "--seed", "4", "--name", "mc"], first.path()));
    for (cmd, meta) in [("run", "sequential.meta.json"), ("montecarlo", "mc.meta.json")] {
        let cfg = first.path().join(meta);
        ok(&gfstop(&[cmd, "--config", cfg.to_str().unwrap()], second.path()));
    }
    for f in ["sequential.csv", "sequential_summary.csv", "mc.csv"] {
        assert_eq!(read(first.path(), f), read(second.path(), f), "{f} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("scenario.json");
    std::fs::write(&cfg, r#"{"command": "steady-state", "seed": 3, "gamma": [0.2], "q": [0.3]}"#).unwrap();
    ok(&gfstop(&["steady-state", "--config", cfg.to_str().unwrap(), "--gamma", "1"], d.path()));
    let meta: Value = serde_json::from_str(&read(d.path(), "steady-state.meta.json")).unwrap();
    assert_eq!(meta["config"]["gamma"], serde_json::json!([1.0]));
    assert_eq!(meta["config"]["q"], serde_json::json!([0.3]));
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["config"]["max_iter"], 10000);
}

#[test]
fn config_errors_name_the_field() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gamma": 0.5, "gama": 1}"#).unwrap();
    let out = gfstop(&["pseudo-true", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "config");
    assert!(rec["error"]["message"].as_str().unwrap().contains("gama"));

    std::fs::write(&cfg, r#"{"sd": "wide"}"#).unwrap();
    let rec = error_record(&gfstop(&["pseudo-true", "--config", cfg.to_str().unwrap()], d.path()));
    assert_eq!(rec["error"]["field"], "sd");

    let out = gfstop(&["dynamics", "--generations", "0"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["field"], "generations");

    let out = gfstop(&["pseudo-true", "--gamma", "abc"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");
}

#[test]
fn numerical_errors_carry_module_context() {
    let d = TempDir::new().unwrap();
    let out = gfstop(&["pseudo-true", "--c=-inf"], d.path());
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "numerical");
    assert_eq!(rec["error"]["command"], "pseudo-true");
    assert_eq!(rec["error"]["cause"], "no_identification");
    assert!(!d.path().join("pseudo-true.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["montecarlo", "--experiment", "outcome_history", "--n", "500", "--reps", "6", "--c", "0"];
    ok(&gfstop_env(&args, a.path(), &[("GFSTOP_THREADS", "1")]));
    ok(&gfstop_env(&args, b.path(), &[("GFSTOP_THREADS", "3")]));
    assert_eq!(read(a.path(), "montecarlo.csv"), read(b.path(), "montecarlo.csv"));
    let out = gfstop_env(&["freddy"], a.path(), &[("GFSTOP_THREADS", "0")]);
    assert_eq!(error_record(&out)["error"]["field"], "GFSTOP_THREADS");
}

#[test]
fn run_needs_a_command() {
    let d = TempDir::new().unwrap();
    let out = gfstop(&["run"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let cfg = d.path().join("s.json");
    std::fs::write(&cfg, r#"{"command": "freddy", "config": {"n": 4, "kappa": [0.6]}}"#).unwrap();
    ok(&gfstop(&["run", "--config", cfg.to_str().unwrap()], d.path()));
    let t = rows(&read(d.path(), "freddy_mixture.csv"));
    let q: f64 = t[1][1].parse().unwrap();
    assert!((q - (7.0 / 18.0 * 0.6 + 1.0 / 9.0)).abs() < 1e-9);
    let out = gfstop(&["mom", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(error_record(&out)["error"]["kind"], "usage");
}

#[test]
fn acceptance_scenarios_as_single_invocations() {
    let d = TempDir::new().unwrap();
    ok(&gfstop(&["kl-oracle", "--c", "1", "--parameters", "means_and_vars"], d.path()));
    ok(&gfstop(&["multiperiod", "--alpha", "0.3", "--delta", "0.9", "--periods", "5", "--cutoffs", "0,0,0,0"], d.path()));
    assert_eq!(rows(&read(d.path(), "multiperiod_verdict.csv"))[1][3], "all_pessimistic");
    ok(&gfstop(&["mom", "--family", "gumbel", "--generations", "10", "--name", "gumbel"], d.path()));
    let t = rows(&read(d.path(), "gumbel.csv"));
    let theta2: f64 = t[1][2].parse().unwrap();
    assert!((theta2 - 0.62815).abs() < 1e-5);
    ok(&gfstop(
        &["dynamics", "--q", "0,0.3,0.6", "--gamma", "0.2,0.5,1", "--c0", "c_star,c_inf-1,c_inf+1", "--generations", "5", "--name", "grid"],
        d.path(),
    ));
    assert_eq!(rows(&read(d.path(), "grid.csv")).len(), 1 + 27 * 2 * 5);
}
