use std::path::Path;
use std::process::{Command, Output};

fn armcal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armcal")).args(args).current_dir(dir).env_remove("ARMCAL_CONFIG").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = armcal(dir.path(), &["simulate", "--n", "120", "--sigma", "0.1", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta1,theta2,theta3,theta4,theta5,theta6,measured_length");
    assert_eq!(lines.count(), 120);
}

#[test]
fn lm_on_noiseless_data_fits_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sim = armcal(dir.path(), &["simulate", "--sigma", "0", "--disturbance", "0", "--out", "clean.csv"]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    let fit = armcal(dir.path(), &["calibrate", "--method", "lm", "--data", "clean.csv", "--out", "lm.json"]);
    assert!(fit.status.success(), "{}", stderr(&fit));
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("lm.json")).unwrap()).unwrap();
    assert_eq!(result["kind"], "single");
    let final_rmse = result["history"].as_array().unwrap().last().unwrap().as_f64().unwrap();
    assert!(final_rmse < 1e-6, "{final_rmse}");

    let eval = armcal(dir.path(), &["evaluate", "--model", "lm.json", "--data", "clean.csv", "--out", "m.json"]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["n"], 120);
    assert!(m["after"]["rmse"].as_f64().unwrap() < 1e-6);
    assert!(m["before"]["rmse"].as_f64().unwrap() > 1.0);
}

#[test]
fn unknown_method_exits_2_with_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = armcal(dir.path(), &["calibrate", "--method", "kalman"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["ekf", "lm", "pf", "svm", "ga", "epf", "lmga", "sga", "ensemble"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unreadable_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "[seeds]\ndata = 7\nsplit = \"one\"\n");
    let o = armcal(dir.path(), &["--config", "bad.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.toml") && err.contains("line 3"), "{err}");

    let o = armcal(dir.path(), &["--config", "missing.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.toml"));
}

#[test]
fn broken_robot_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "arm.dh", "link1 = 1 2 3\n");
    write(dir.path(), "run.toml", "robot = \"arm.dh\"\n");
    let o = armcal(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("arm.dh:1"), "{err}");
}

#[test]
fn config_from_environment_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "[simulation]\nn = 15\n[outputs]\ndataset = \"from_config.csv\"\n");
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_armcal")).args(args).current_dir(dir.path()).env("ARMCAL_CONFIG", "run.toml").output().unwrap()
    };
    assert!(run(&["simulate"]).status.success());
    let rows = std::fs::read_to_string(dir.path().join("from_config.csv")).unwrap().lines().count();
    assert_eq!(rows, 16);
    assert!(run(&["simulate", "--n", "9", "--out", "flag.csv"]).status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("flag.csv")).unwrap().lines().count(), 10);
}

#[test]
fn missing_dataset_fails_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = armcal(dir.path(), &["calibrate", "--method", "lm", "--data", "nope.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn evaluate_rejects_other_ensemble_versions() {
    let dir = tempfile::tempdir().unwrap();
    assert!(armcal(dir.path(), &["simulate", "--n", "30"]).status.success());
    let fit = armcal(dir.path(), &["calibrate", "--method", "ensemble", "--order", "ekf,lm", "--out", "e.json"]);
    assert!(fit.status.success(), "{}", stderr(&fit));
    let text = std::fs::read_to_string(dir.path().join("e.json")).unwrap();
    assert!(text.contains("\"kind\": \"ensemble\""));
    write(dir.path(), "old.json", &text.replacen("\"version\": 1", "\"version\": 0", 1));
    let o = armcal(dir.path(), &["evaluate", "--model", "old.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("version"));
}

#[test]
fn compare_writes_report_table_and_series() {
    let dir = tempfile::tempdir().unwrap();
    assert!(armcal(dir.path(), &["simulate"]).status.success());
    let o = armcal(dir.path(), &["compare", "--methods", "lm,ekf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("test data") && stdout.contains("before") && stdout.contains("ekf"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["dataset"]["n_train"], 96);
    assert_eq!(report["dataset"]["n_test"], 24);
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(table.contains("test data") && table.contains("train data"));
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "sample,before,lm,ekf");
}

#[test]
fn curve_has_one_row_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    assert!(armcal(dir.path(), &["simulate"]).status.success());
    let o = armcal(dir.path(), &["curve", "--order", "ekf,svm,lm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("1,ekf,") && rows[3].starts_with("3,lm,"));
}

#[test]
fn help_documents_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = armcal(dir.path(), &["calibrate", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--method", "--data", "--split-seed", "--seed", "--holdout", "--order", "--shrinkage", "--out", "--config"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}
