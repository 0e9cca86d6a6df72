#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use impulse_design::config::Config;
use serde_json::Value;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn baseline_path() -> PathBuf {
    repo_root().join("configs/baseline.json")
}

pub fn baseline_config() -> Config {
    Config::load(&baseline_path()).expect("baseline config")
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_impulse-design")).args(args).output().expect("spawn cli");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Same tree shape and keys; numbers within 1e-9 relative (1e-12 absolute
/// for values that are rounding noise around zero).
pub fn json_diff(path: &str, got: &Value, want: &Value, out: &mut Vec<String>) {
    match (got, want) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) + 1e-12 {
                out.push(format!("{path}: {a:e} vs golden {b:e}"));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                out.push(format!("{path}: length {} vs golden {}", a.len(), b.len()));
                return;
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                json_diff(&format!("{path}[{i}]"), x, y, out);
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            let ka: Vec<_> = a.keys().collect();
            let kb: Vec<_> = b.keys().collect();
            if ka != kb {
                out.push(format!("{path}: keys {ka:?} vs golden {kb:?}"));
                return;
            }
            for (k, v) in a {
                json_diff(&format!("{path}.{k}"), v, &b[k], out);
            }
        }
        _ if got == want => {}
        _ => out.push(format!("{path}: {got} vs golden {want}")),
    }
}

pub struct GoldenCheck {
    pub compared: usize,
    pub mismatches: Vec<String>,
}

fn golden(name: &str, got: &Value, check: &mut GoldenCheck) -> Result<(), String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(got).unwrap() + "\n").map_err(|e| e.to_string())?;
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let want: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    json_diff(name, got, &want, &mut check.mismatches);
    check.compared += 1;
    Ok(())
}

fn run_json(args: &[&str]) -> Result<Value, String> {
    let r = cli(args);
    if r.code != 0 {
        return Err(format!("`{}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()));
    }
    serde_json::from_str(&r.stdout).map_err(|e| e.to_string())
}

fn number_text(v: &Value) -> String {
    // Numbers keep their printed digits under arbitrary precision.
    v.to_string()
}

/// `design` → `solve` → `verify-qvi` → `simulate` on the baseline config,
/// each compared against its golden document. The solve step must also
/// recover the configured targets.
pub fn run_cli_pipeline() -> Result<GoldenCheck, String> {
    let config = baseline_path();
    let config = config.to_str().unwrap();
    let mut check = GoldenCheck { compared: 0, mismatches: Vec::new() };

    let design = run_json(&["design", "--config", config])?;
    golden("design", &design, &mut check)?;
    let lambda = number_text(&design["lambda"]);
    let kappa = number_text(&design["kappa"]);

    let solve = run_json(&["solve", "--config", config, "--lambda", &lambda, "--kappa", &kappa])?;
    golden("solve", &solve, &mut check)?;
    let targets = baseline_config().targets().unwrap();
    let hit = solve["solutions"].as_array().into_iter().flatten().any(|s| {
        let h = s["x_hat"].as_f64().unwrap_or(f64::NAN);
        let x = s["x_star"].as_f64().unwrap_or(f64::NAN);
        ((h - targets.x_hat) / targets.x_hat).abs() <= 1e-6 && ((x - targets.x_star) / targets.x_star).abs() <= 1e-6
    });
    if !hit {
        check.mismatches.push("solve: configured targets not among the solutions".into());
    }

    let qvi = run_json(&["verify-qvi", "--config", config])?;
    golden("verify_qvi", &qvi, &mut check)?;
    if qvi["passes"] != Value::Bool(true) {
        check.mismatches.push("verify-qvi: check did not pass".into());
    }

    let sim = run_json(&["simulate", "--config", config, "--lambda", &lambda, "--kappa", &kappa])?;
    golden("simulate", &sim, &mut check)?;
    Ok(check)
}
