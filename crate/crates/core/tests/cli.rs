mod common;

use common::{baseline_path, cli};
use serde_json::Value;

fn write_config(dir: &tempfile::TempDir, body: &str) -> String {
    let path = dir.path().join("m.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn no_jump_model(dir: &tempfile::TempDir) -> String {
    write_config(dir, r#"{"model": {"gamma_drift": 0.05, "sigma": 0.3, "delta": 0.1, "epsilon": 1.0}}"#)
}

fn field(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing {key} in {v}"))
}

#[test]
fn roots_on_no_jump_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = no_jump_model(&dir);
    let run = cli(&["roots", "--config", &cfg]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!((field(&v, "l1") + 1.54730).abs() < 1e-5);
    assert!((field(&v, "l2") - 1.43619).abs() < 1e-5);
    assert_eq!(v["method"], "closed_form");
}

#[test]
fn missing_config_is_io_error() {
    let run = cli(&["roots", "--config", "/nonexistent/m.json"]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("/nonexistent/m.json"), "{}", run.stderr);
}

#[test]
fn malformed_config_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, r#"{"model": {"gamma_drift": 0.05, "sigma": -0.3, "delta": 0.1, "epsilon": 1.0}}"#);
    let run = cli(&["roots", "--config", &cfg]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("sigma"), "{}", run.stderr);
}

#[test]
fn reversed_targets_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = no_jump_model(&dir);
    let run = cli(&["design", "--config", &cfg, "--x-hat", "2", "--x-star", "1"]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("x_hat"), "{}", run.stderr);
}

#[test]
fn missing_targets_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = no_jump_model(&dir);
    let run = cli(&["design", "--config", &cfg]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("targets"), "{}", run.stderr);
}

#[test]
fn design_then_solve_round_trip() {
    let base = baseline_path();
    let base = base.to_str().unwrap();
    let design = cli(&["design", "--config", base, "--x-hat", "3", "--x-star", "12"]);
    assert_eq!(design.code, 0, "{}", design.stderr);
    let d: Value = serde_json::from_str(&design.stdout).unwrap();
    let (lambda, kappa) = (d["lambda"].to_string(), d["kappa"].to_string());
    let solve = cli(&["solve", "--config", base, "--lambda", &lambda, "--kappa", &kappa]);
    assert_eq!(solve.code, 0, "{}", solve.stderr);
    let s: Value = serde_json::from_str(&solve.stdout).unwrap();
    let hit = s["solutions"].as_array().unwrap().iter().any(|sol| {
        (field(sol, "x_hat") - 3.0).abs() <= 3e-6 && (field(sol, "x_star") - 12.0).abs() <= 12e-6
    });
    assert!(hit, "{s}");
}

#[test]
fn csv_written_alongside_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("qvi.csv");
    let base = baseline_path();
    let run = cli(&["verify-qvi", "--config", base.to_str().unwrap(), "--points", "64", "--csv", csv.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,phi,m_phi,residual"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn sequential_flag_gives_identical_output() {
    let base = baseline_path();
    let base = base.to_str().unwrap();
    let par = cli(&["solve", "--config", base, "--lambda", "0.2", "--kappa", "0.3"]);
    let seq = cli(&["solve", "--config", base, "--lambda", "0.2", "--kappa", "0.3", "--sequential"]);
    assert_eq!(par.code, seq.code);
    assert_eq!(par.stdout, seq.stdout);
}

#[test]
fn numbers_carry_seventeen_digits() {
    let base = baseline_path();
    let run = cli(&["design", "--config", base.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    let lambda: f64 = v["lambda"].to_string().parse().unwrap();
    assert_eq!(lambda, 0.1852229777676182);
}
