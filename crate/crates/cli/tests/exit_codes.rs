use std::fs;
use std::process::Command;

use fedmed::cohort::schema::ms_schema;
use fedmed::AssetPolicy;
use fedmed_cli::{EXIT_AUDIT, EXIT_CONFIG, EXIT_IO, EXIT_POLICY};

fn fedmed() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedmed"))
}

fn generate(dir: &std::path::Path) {
    let ok = fedmed().args(["generate", "--default", "--seed", "3", "--out"]).arg(dir).status().unwrap();
    assert!(ok.success());
}

#[test]
fn negative_subject_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = serde_json::to_value(fedmed::synthgen::default_two_site_config()).unwrap();
    cfg["sites"][0]["n_subjects"] = serde_json::json!(-4);
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = fedmed().args(["generate", "--config"]).arg(&path).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn policy_denial_exits_with_policy_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data);
    let policy = AssetPolicy::default_for(&ms_schema()).with_thresholds(100_000, 5);
    let path = dir.path().join("policy.json");
    fs::write(&path, serde_json::to_string(&policy).unwrap()).unwrap();
    let out = fedmed().args(["run", "--workflow", "tableone", "--data"]).arg(&data).arg("--policy").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_POLICY), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_data_dir_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedmed().args(["run", "--workflow", "km", "--data"]).arg(dir.path().join("nope")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_IO));
}

#[test]
fn unknown_workflow_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedmed().args(["run", "--workflow", "bogus", "--data"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn audit_of_a_clean_run_passes_and_a_truncated_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data);
    let ok = fedmed().args(["run", "--workflow", "km", "--data"]).arg(&data).status().unwrap();
    assert!(ok.success());
    let manifest = data.join("results/manifest.json");
    assert!(fedmed().args(["audit", "--run"]).arg(&manifest).status().unwrap().success());
    let log = data.join("results/messages.jsonl");
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{not json\n");
    fs::write(&log, text).unwrap();
    assert_eq!(fedmed().args(["audit", "--run"]).arg(&manifest).status().unwrap().code(), Some(EXIT_AUDIT));
}
