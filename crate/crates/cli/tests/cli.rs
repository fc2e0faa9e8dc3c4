use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn score(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_score"));
    cmd.args(args).env_remove("SCORE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const QUICK: &str = r#"
[sampler]
k_steps = 100
n_blocks = 20

[evt]
b_resamples = 100
"#;

#[test]
fn certify_isotropic_fixture_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        r#"
rho = 1.0
[system]
kind = "linear"
matrix = [[-1.0, 0.0], [0.0, -1.0]]
"#,
    );
    let rep = dir.path().join("report.json");
    let out = score(
        &["certify", "--config", cfg.to_str().unwrap(), "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&rep);
    let c = &r["result"]["certification"];
    assert_eq!(c["decision"], "CERTIFIED");
    assert_eq!(c["ci_upper"].as_f64(), Some(-2.0));
    assert!(r["result"]["phase_times"]["sampling"].as_f64().unwrap() > 0.0);
    assert_eq!(r["software"]["name"], "score");
    assert_eq!(r["config"]["sampler"]["k_steps"], 500);
    assert!(c["psgld"]["eta"].as_f64().unwrap() > 0.0);
}

#[test]
fn certify_above_the_cubic_boundary_exits_one_with_counterexample() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &format!("rho = 1.21\n[system]\nkind = \"scalar_cubic\"\n{QUICK}"),
    );
    let rep = dir.path().join("report.json");
    let out = score(
        &["certify", "--config", cfg.to_str().unwrap(), "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let c = &report(&rep)["result"]["certification"];
    assert_eq!(c["decision"], "REJECTED");
    let cx = &c["counterexample"];
    assert!(cx["vdot"].as_f64().unwrap() >= 0.0);
    assert!((cx["v"].as_f64().unwrap() - 1.21).abs() <= 1e-9);
}

#[test]
fn missing_config_exits_three() {
    let out = score(&["certify", "--config", "/nonexistent/run.toml"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_field_is_reported_with_its_name() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", "rho = 1.0\nrhoo = 2.0\n");
    let out = score(&["certify", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rhoo"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn invalid_settings_exit_three() {
    let dir = TempDir::new().unwrap();
    let cases = [
        "rho = 1.0\n[system]\nkind = \"scalar_cubic\"\n[evt]\nalpha = 0.7\n",
        "[system]\nkind = \"scalar_cubic\"\n",
        "mode = \"search\"\nrho = 1.0\n[system]\nkind = \"scalar_cubic\"\n",
        "rho = 1.0\n[system]\nkind = \"scalar_cubic\"\n[candidate]\nsource = \"file\"\npath = \"missing.txt\"\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{i}.toml"), text);
        let out = score(&["certify", "--config", cfg.to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(3), "case {i}");
    }
}

#[test]
fn bad_thread_env_exits_three_unless_flag_given() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "rho = 1.0\n[system]\nkind = \"linear\"\nmatrix = [[-1.0]]\n",
    );
    let c = cfg.to_str().unwrap();
    let out = score(&["certify", "--config", c], &[("SCORE_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(3));
    let rep = dir.path().join("r.json");
    let out = score(
        &["certify", "--config", c, "--threads", "2", "--report", rep.to_str().unwrap()],
        &[("SCORE_THREADS", "zero")],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&rep)["threads"], 2);
}

#[test]
fn report_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &format!("rho = 1.0\nseed = 3\n[system]\nkind = \"linear\"\nmatrix = [[-1.0, 0.5], [0.0, -3.0]]\n{QUICK}"),
    );
    let first = dir.path().join("a.json");
    let csv = dir.path().join("maxima.csv");
    let out = score(
        &[
            "certify",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--threads",
            "1",
            "--report",
            first.to_str().unwrap(),
            "--export-blockmax",
            csv.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = report(&first);
    assert_eq!(a["config"]["seed"], 9);

    let echoed = write(dir.path(), "echo.json", &a["config"].to_string());
    let second = dir.path().join("b.json");
    let out = score(
        &["certify", "--config", echoed.to_str().unwrap(), "--threads", "3", "--report", second.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let b = report(&second);
    let (ca, cb) = (&a["result"]["certification"], &b["result"]["certification"]);
    for key in ["decision", "ci_upper", "block_maxima"] {
        assert_eq!(ca[key], cb[key], "{key}");
    }
    assert_eq!(ca["gev"]["params"]["shape"], cb["gev"]["params"]["shape"]);

    let text = std::fs::read_to_string(&csv).unwrap();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 20);
    let stored: Vec<f64> = ca["block_maxima"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(values, stored);
}

#[test]
fn export_flag_is_rejected_outside_certify() {
    let out = score(&["bench", "--export-blockmax", "/tmp/x.csv"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_budget_bench_times_out_every_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "[bench]\ndimensions = [10, 50]\nbudget_secs = 0.0\n",
    );
    let rep = dir.path().join("bench.json");
    let out = score(
        &["bench", "--config", cfg.to_str().unwrap(), "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = report(&rep)["result"]["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["outcome"] == "TIMEOUT"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("TIMEOUT"));
}

#[test]
fn synthesized_candidate_round_trips_through_certify() {
    let dir = TempDir::new().unwrap();
    let cand = dir.path().join("cand.txt");
    let cfg = write(
        dir.path(),
        "synth.toml",
        &format!(
            "candidate_output = {:?}\n[system]\nkind = \"vdp_reversed\"\n[synthesis]\nn_train = 512\nmax_iters = 200\ntrain_radius = 1.0\n",
            cand.to_str().unwrap()
        ),
    );
    let out = score(&["synth", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(cand.exists());

    let cfg = write(
        dir.path(),
        "certify.toml",
        &format!("rho = 0.001\n[system]\nkind = \"vdp_reversed\"\n[candidate]\nsource = \"file\"\npath = \"cand.txt\"\n{QUICK}"),
    );
    let rep = dir.path().join("r.json");
    let out = score(
        &["certify", "--config", cfg.to_str().unwrap(), "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&rep)["result"]["candidate"]["degree"], 2);
}

#[test]
fn search_on_the_cubic_stays_below_the_boundary() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "search.toml",
        &format!("[system]\nkind = \"scalar_cubic\"\n[search]\nrho_low = 0.01\nrho_high = 4.0\n{QUICK}"),
    );
    let rep = dir.path().join("r.json");
    let out = score(
        &["search", "--config", cfg.to_str().unwrap(), "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&rep);
    let rho = r["result"]["search"]["rho_star"].as_f64().unwrap();
    assert!((0.85..1.0).contains(&rho), "{rho}");
}

#[test]
fn search_with_uncertifiable_floor_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "search.toml",
        &format!("[system]\nkind = \"scalar_cubic\"\n[search]\nrho_low = 1.5\nrho_high = 4.0\n{QUICK}"),
    );
    let out = score(&["search", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_suite_passes() {
    let out = score(&["validate"], &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}
