use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;
use wws_core::mpc::{ClosedLoopTrace, ControllerConfig, FeasibilityTable};
use wws_core::predictor::LinearPredictor;

fn wws(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wws"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn wws")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small EDMD fit shared by the tests that need a predictor file.
fn small_predictor() -> &'static PathBuf {
    static P: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    &P.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = wws(&["fit", "--K", "300", "--seed", "3", "--out", s(dir.path())], &[]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let path = dir.path().join("predictor.json");
        (dir, path)
    })
    .1
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_is_reproducible_per_seed() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        assert_eq!(code(&wws(&["fit", "--K", "300", "--seed", seed, "--out", s(&out)], &[])), 0);
        fs::read(out.join("predictor.json")).unwrap()
    };
    let (a, b, c) = (run("3", "a"), run("3", "b"), run("4", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, fs::read(small_predictor()).unwrap());

    let p = LinearPredictor::load(dir.path().join("a/predictor.json")).unwrap();
    assert_eq!(p.dim(), 16);
    let report = json(&dir.path().join("a/fit_report.json"));
    assert_eq!(report["dataset"]["K"], 300);
    assert!(report["diagnostics"]["output_residual_max"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn local_fit_emits_the_linearization_baseline() {
    let dir = TempDir::new().unwrap();
    let out = wws(&["fit", "--local", "--target-y", "40", "--out", s(dir.path())], &[]);
    assert_eq!(code(&out), 0);
    // The bundled plant can only hold 40 °C with an input far outside its range.
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the heat pump range"));
    let p = LinearPredictor::load(dir.path().join("predictor.json")).unwrap();
    assert!(p.is_local());
    assert_eq!(p.meta.method.as_deref(), Some("local-linearization"));
    let report = json(&dir.path().join("fit_report.json"));
    assert_eq!(report["equilibrium"]["x"][4], 40.0);
}

#[test]
fn run_writes_deterministic_artifacts() {
    let dir = TempDir::new().unwrap();
    let pred = s(small_predictor()).to_string();
    let go = |sub: &str| {
        let out = dir.path().join(sub);
        let o = wws(&["run", "--predictor", &pred, "--out", s(&out), "--svg", "--dump-lp"], &[]);
        (code(&o), out)
    };
    let ((c1, a), (c2, b)) = (go("a"), go("b"));
    // Every plan is infeasible on the bundled plant, which maps to exit code 2.
    assert_eq!((c1, c2), (2, 2));
    for f in ["trace.csv", "summary.json", "step0.lp", "trace.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = json(&a.join("summary.json"));
    assert_eq!(summary["steps"], 21);
    assert!(summary.get("total_solve_seconds").is_none());
    assert!(json(&a.join("timing.json"))["solve_seconds"].as_array().unwrap().len() == 21);

    let cfg = ControllerConfig::default();
    let csv = fs::read_to_string(a.join("trace.csv")).unwrap();
    let trace = ClosedLoopTrace::from_csv(&csv, cfg.h, cfg.specs.clone()).unwrap();
    assert_eq!(trace.rows.len(), 21);
    assert_eq!(trace.to_csv(), csv);
    assert!(fs::read_to_string(a.join("step0.lp")).unwrap().contains("Minimize"));
}

#[test]
fn run_without_temporal_logic_succeeds() {
    let dir = TempDir::new().unwrap();
    let o = wws(&["run", "--no-stl", "--predictor", s(small_predictor()), "--out", s(dir.path())], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["specs"].as_array().unwrap().len(), 0);
    assert!(summary["infeasible_steps"].as_array().unwrap().is_empty());
}

#[test]
fn default_sweep_has_seven_rows_and_six_columns() {
    let dir = TempDir::new().unwrap();
    let o = wws(&["sweep", "--predictor", s(small_predictor()), "--out", s(dir.path())], &[]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let table = FeasibilityTable::from_csv(&csv).unwrap();
    assert_eq!((table.cells.len(), table.cells[0].len()), (7, 6));
    assert_eq!(table.to_csv(), csv);
    let notes = json(&dir.path().join("sweep_notes.json"));
    assert_eq!(notes["notes"].as_array().unwrap().len(), 7);
}

#[test]
fn bench_report_is_well_formed() {
    let dir = TempDir::new().unwrap();
    let local = dir.path().join("local");
    assert_eq!(code(&wws(&["fit", "--local", "--out", s(&local)], &[])), 0);
    let o = wws(
        &[
            "bench",
            "--predictor",
            s(small_predictor()),
            "--compare",
            s(&local.join("predictor.json")),
            "--rollouts",
            "4",
            "--steps",
            "3",
            "--out",
            s(dir.path()),
        ],
        &[],
    );
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("bench.json"));
    let preds = r["predictors"].as_array().unwrap();
    assert_eq!(preds.len(), 2);
    for p in preds {
        let rmse = p["rmse"].as_array().unwrap();
        assert_eq!(rmse.len(), 4);
        assert!(rmse.iter().all(|row| row.as_array().unwrap().len() == 6));
    }
    assert!(preds[0]["reconstruction_error"].as_f64().unwrap() <= 1e-8);
    assert!(preds[0]["distance_vs_error"].is_null());
    assert_eq!(preds[1]["distance_vs_error"].as_array().unwrap().len(), 4);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"controller": {"horizon": 3}}"#).unwrap();
    let o = wws(&["--config", s(&cfg), "fit", "--out", s(dir.path())], &[("WWS_FIT__K", "5")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("K = 5"));

    assert_eq!(code(&wws(&["run", "--predictor", "/nonexistent.json"], &[])), 1);
    fs::write(&cfg, "{not json").unwrap();
    assert_eq!(code(&wws(&["--config", s(&cfg), "sweep"], &[])), 1);
}
