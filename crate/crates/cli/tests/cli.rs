use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sparda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparda"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPARDA_SEED")
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "exactly one summary line, got {stdout:?}");
    serde_json::from_str(lines[0]).expect("summary is JSON")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = sparda(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    summary(&out)
}

fn simulate_small_vector(dir: &Path) {
    ok(
        &["simulate", "--kind", "vector", "--p", "40", "--n-per-class", "40", "--n-test", "300", "--seed", "3", "--out-dir", "vec"],
        dir,
    );
}

#[test]
fn tensor_simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["simulate", "--kind", "tensor", "--dims", "3,3,2", "--n-per-class", "10", "--n-test", "20", "--seed", "7", "--out-dir", out]
    };
    ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    for f in ["train.csv", "test.csv", "train.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed_flag: bool| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparda"));
        cmd.args(["simulate", "--p", "12", "--n-per-class", "4", "--n-test", "4", "--out-dir", out])
            .current_dir(dir.path());
        if seed_flag {
            cmd.args(["--seed", "99"]).env_remove("SPARDA_SEED");
        } else {
            cmd.env("SPARDA_SEED", "99");
        }
        assert!(cmd.output().unwrap().status.success());
    };
    run("flag", true);
    run("env", false);
    let a = std::fs::read(dir.path().join("flag/train.csv")).unwrap();
    let b = std::fs::read(dir.path().join("env/train.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fit_then_predict_reports_minimal_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small_vector(dir.path());
    let fit = ok(&["fit", "--method", "dsda", "--input", "vec/train.csv", "--out", "model.json"], dir.path());
    assert_eq!(fit["method"], "dsda");
    assert!(dir.path().join("model.path.csv").exists());
    let pred = ok(
        &["predict", "--model", "model.json", "--input", "vec/test.csv", "--out", "pred.csv", "--errors", "err.csv"],
        dir.path(),
    );
    let err = pred["min_error"].as_f64().unwrap();
    assert!((0.0..0.5).contains(&err), "min error {err}");

    // the error table agrees with the summary
    let table = std::fs::read_to_string(dir.path().join("err.csv")).unwrap();
    let best = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, err);
    let rows = std::fs::read_to_string(dir.path().join("pred.csv")).unwrap().lines().count();
    assert_eq!(rows, 301);
}

#[test]
fn cv_chooses_a_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--kind", "tensor", "--dims", "3,3,2", "--n-per-class", "20", "--n-test", "10", "--out-dir", "ten"],
        dir.path(),
    );
    let s = ok(
        &["cv", "--method", "catch", "--nfolds", "5", "--rule", "min", "--nlambda", "20", "--input", "ten/train.csv", "--out", "cv.json"],
        dir.path(),
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cv.json")).unwrap()).unwrap();
    let chosen = s["chosen_lambda"].as_f64().unwrap();
    let grid: Vec<f64> = report["lambdas"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(grid.contains(&chosen));
    assert_eq!(report["chosen_lambda"].as_f64().unwrap(), chosen);
}

#[test]
fn outputs_are_readable_by_the_same_binary() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--kind", "tensor", "--dims", "3,2,2", "--n-per-class", "20", "--n-test", "30", "--out-dir", "ten"],
        dir.path(),
    );
    ok(&["adjust", "--input", "ten/train.csv", "--out", "adj.csv", "--adjustment", "adjustment.json"], dir.path());
    ok(&["fit", "--method", "msda", "--input", "adj.csv", "--out", "m.json", "--nlambda", "10"], dir.path());
    ok(&["screen", "--input", "adj.csv", "--out", "f.csv"], dir.path());

    simulate_small_vector(dir.path());
    let s = ok(&["screen", "--input", "vec/train.csv", "--out", "f.csv", "--top", "8", "--write-data", "top.csv"], dir.path());
    assert_eq!(s["top"].as_array().unwrap().len(), 8);
    ok(
        &["fit", "--method", "sesda", "--input", "top.csv", "--out", "s.json", "--coef-table", "coef.csv"],
        dir.path(),
    );
    ok(&["predict", "--model", "s.json", "--input", "top.csv", "--out", "p.csv"], dir.path());
}

#[test]
fn covariate_model_needs_covariates_at_prediction() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--kind", "tensor", "--dims", "3,2,2", "--n-per-class", "20", "--n-test", "30", "--out-dir", "ten"],
        dir.path(),
    );
    ok(&["fit", "--method", "catch", "--input", "ten/train.csv", "--out", "c.json", "--nlambda", "10"], dir.path());
    ok(&["predict", "--model", "c.json", "--input", "ten/test.csv", "--out", "p.csv"], dir.path());
    ok(&["adjust", "--input", "ten/test.csv", "--out", "plain.csv"], dir.path());
    let out = sparda(&["predict", "--model", "c.json", "--input", "plain.csv", "--out", "p2.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparda(&["fit", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(summary(&out)["status"], "error");

    simulate_small_vector(dir.path());
    let out = sparda(
        &["fit", "--method", "dsda", "--model-option", "modified", "--input", "vec/train.csv", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = sparda(
        &["fit", "--method", "dsda", "--lambda", "0.1,0.5", "--input", "vec/train.csv", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "error");
}

#[test]
fn binary_methods_reject_multiclass_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("three.csv"),
        "label,x1,x2\n1,0.1,0.2\n2,1.0,0.3\n3,2.2,0.1\n1,0.0,0.5\n2,1.1,0.2\n3,2.0,0.4\n",
    )
    .unwrap();
    let out = sparda(&["fit", "--method", "sos", "--input", "three.csv", "--out", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    ok(&["fit", "--method", "msda", "--input", "three.csv", "--out", "m.json", "--nlambda", "5"], dir.path());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparda(&["fit", "--method", "dsda", "--input", "absent.csv", "--out", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
