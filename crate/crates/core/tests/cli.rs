use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optimal-load"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_cfg(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default())
        .unwrap_or_else(|_| panic!("stderr: {text}"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn rc_solve_reports_one_sixth() {
    let tmp = TempDir::new().unwrap();
    let out = run_cfg("solve", &config("rc"), tmp.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = json(&tmp.path().join("summary.json"));
    assert!((s["extracted_energy"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-5);
    assert_eq!(s["certificates"]["passivity"]["verdict"], "positive_real");
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x0,p0,u0,y0,yplus0,yS0,yL0");
    assert_eq!(csv.lines().count(), 1002);
}

#[test]
fn resistor_solve_reports_quarter() {
    let tmp = TempDir::new().unwrap();
    let out = run_cfg("solve", &config("resistor"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&tmp.path().join("summary.json"));
    assert!((s["extracted_energy"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,u0,y0,yplus0,yS0,yL0");
}

#[test]
fn summary_scalars_round_trip_exactly() {
    let tmp = TempDir::new().unwrap();
    run_cfg("solve", &config("nonlinear_capacitor"), tmp.path(), &[]);
    let text = fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    for key in [
        "extracted_energy",
        "power",
        "shooting_residual",
        "first_order_residual",
        "load_consistency",
    ] {
        let x = v[key].as_f64().unwrap();
        let reprinted: f64 = serde_json::to_string(&x).unwrap().parse().unwrap();
        assert_eq!(reprinted.to_bits(), x.to_bits(), "{key}");
    }
    let again = serde_json::to_string_pretty(&v).unwrap() + "\n";
    assert_eq!(again, text);
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": {"type": "static", "h": ["u0"]},
            "source": {"type": "constant", "value": [1.0]},
            "problem": {"x0": [], "horizon": "long"}}"#,
    );
    let out = run_cfg("solve", &cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["category"], "config");
    assert!(
        err["message"].as_str().unwrap().contains("problem.horizon"),
        "{err}"
    );
}

#[test]
fn dimension_mismatch_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": {"type": "generic", "f": ["u0"], "h": ["x0 + u0"]},
            "source": {"type": "constant", "value": [1.0, 2.0]},
            "problem": {"x0": [0.0], "horizon": 1.0}}"#,
    );
    let out = run_cfg("solve", &cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn singular_hessian_is_a_solver_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": {"type": "linear", "a": [[0.0]], "b": [[1.0]], "c": [[1.0]], "d": [[0.0]]},
            "source": {"type": "constant", "value": [1.0]},
            "problem": {"x0": [0.0], "horizon": 1.0, "steps": 50}}"#,
    );
    let out = run_cfg("solve", &cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["category"], "solver.singular_hessian");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = run_cfg("solve", &config("resistor"), &blocker, &[]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["category"], "io");
}

#[test]
fn verify_outcomes() {
    let tmp = TempDir::new().unwrap();
    let rc = run_cfg("verify", &config("rc"), &tmp.path().join("rc"), &[]);
    assert_eq!(
        rc.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&rc.stdout)
    );
    let report = json(&tmp.path().join("rc/verify.json"));
    assert_eq!(report["passed"], true);

    let neg = run_cfg(
        "verify",
        &config("rc_negative_r"),
        &tmp.path().join("neg"),
        &[],
    );
    assert_eq!(neg.status.code(), Some(1));
    let report = json(&tmp.path().join("neg/verify.json"));
    let passivity = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "passivity")
        .unwrap();
    assert_eq!(passivity["status"], "fail");

    let cap = run_cfg(
        "verify",
        &config("nonlinear_capacitor"),
        &tmp.path().join("cap"),
        &[],
    );
    assert_eq!(cap.status.code(), Some(0));
    let report = json(&tmp.path().join("cap/verify.json"));
    let passivity = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "passivity")
        .unwrap();
    assert_eq!(passivity["status"], "empirical_only");
}

#[test]
fn oracle_compares_with_prior_solve() {
    let tmp = TempDir::new().unwrap();
    let out = run_cfg("oracle", &config("rc"), tmp.path(), &["--steps", "200"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&tmp.path().join("oracle.json"))
        .get("comparison")
        .is_none());

    run_cfg("solve", &config("rc"), tmp.path(), &["--steps", "200"]);
    run_cfg("oracle", &config("rc"), tmp.path(), &["--steps", "200"]);
    let o = json(&tmp.path().join("oracle.json"));
    assert!(o["comparison"]["l2_distance"].as_f64().unwrap() <= 1e-3);
    assert!(o["comparison"]["power_difference"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn exhausted_oracle_budget_exits_three() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(config("rc")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["oracle"] = serde_json::json!({"iterations": 0});
    let cfg = write_config(tmp.path(), &v.to_string());
    let out = run_cfg("oracle", &cfg, tmp.path(), &["--steps", "50"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["category"], "solver.budget_exhausted");
    assert_eq!(
        json(&tmp.path().join("oracle.json"))["status"],
        "budget_exhausted"
    );
}

#[test]
fn load_reports_structure() {
    let tmp = TempDir::new().unwrap();
    let out = run_cfg("load", &config("ph_mass_spring"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let l = json(&tmp.path().join("load.json"));
    assert_eq!(l["structured"]["kind"], "port_hamiltonian_linear");
    assert_eq!(
        l["structured"]["matrices"]["j"],
        serde_json::json!([[-0.0, -1.0], [1.0, -0.0]])
    );
    assert!(
        l["structured"]["verification"]["discrepancy"]
            .as_f64()
            .unwrap()
            < 1e-8
    );
    let csv = fs::read_to_string(tmp.path().join("load.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,u0,yL0");
}

#[test]
fn simulate_reads_input_csv() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("u.csv");
    let mut text = String::from("t,u0\n");
    for k in 0..=10 {
        text.push_str(&format!("{},0.5\n", k as f64 * 0.1));
    }
    fs::write(&input, text).unwrap();
    let out = run_cfg(
        "simulate",
        &config("rc"),
        tmp.path(),
        &["--input", input.to_str().unwrap()],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("simulation.csv")).unwrap();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    // x = 0.5·t, y = x + u
    assert_eq!(last, vec![1.0, 0.5, 0.5, 1.0]);

    fs::write(&input, "t,u0\n0,1\n0.1,1\n0.3,1\n").unwrap();
    let bad = run_cfg(
        "simulate",
        &config("rc"),
        tmp.path(),
        &["--input", input.to_str().unwrap()],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn runs_are_bit_reproducible() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let out = run_cfg(
            "verify",
            &config("ph_quartic"),
            &tmp.path().join(dir),
            &["--seed", "9"],
        );
        assert_eq!(out.status.code(), Some(0));
        run_cfg(
            "solve",
            &config("ph_quartic"),
            &tmp.path().join(dir),
            &["--full-precision"],
        );
    }
    for file in ["trajectory.csv", "summary.json", "verify.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn batch_directory_runs_each_config() {
    let tmp = TempDir::new().unwrap();
    let cfgs = tmp.path().join("cfgs");
    fs::create_dir(&cfgs).unwrap();
    for name in ["rc", "resistor", "gradient_linear"] {
        fs::copy(config(name), cfgs.join(format!("{name}.json"))).unwrap();
    }
    let out = run_cfg(
        "solve",
        &cfgs,
        &tmp.path().join("out"),
        &["--jobs", "3", "--steps", "100"],
    );
    assert_eq!(out.status.code(), Some(0));
    for name in ["rc", "resistor", "gradient_linear"] {
        assert!(tmp
            .path()
            .join("out")
            .join(name)
            .join("summary.json")
            .exists());
    }
}
