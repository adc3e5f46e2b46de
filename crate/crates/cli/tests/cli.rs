//! End-to-end tests of the `covermark` binary: every subcommand is driven
//! through a real process, checking outputs, exit codes, and determinism.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn covermark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covermark"))
        .args(args)
        .output()
        .expect("failed to launch covermark binary")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).expect("stdout is not UTF-8")
}

fn path_str(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn assert_file_exists(dir: &TempDir, name: &str) {
    assert!(
        Path::new(&path_str(dir, name)).is_file(),
        "{name} was not written"
    );
}

#[test]
fn generate_prints_signal_factors_and_selections() {
    let output = covermark(&["generate", "--value", "120", "--taps", "1,2,5,6"]);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("0001111000001101110011000111"));
    assert!(stdout.contains("1 14 0 13 12 12 7"));
    assert!(stdout.contains("selection 4"));
}

#[test]
fn generate_json_matches_table_signal() {
    let json = stdout_of(&covermark(&[
        "generate", "--value", "120", "--format", "json",
    ]));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(
        parsed["signal"].as_str().unwrap(),
        "0001111000001101110011000111"
    );
    assert_eq!(parsed["weight_factors"][1].as_u64().unwrap(), 14);
}

#[test]
fn embed_extract_round_trip_via_files() {
    let dir = TempDir::new().unwrap();
    let record = path_str(&dir, "record.json");
    stdout_of(&covermark(&[
        "embed", "--value", "97", "--seed", "11", "--format", "json", "--out", &record,
    ]));
    assert_file_exists(&dir, "record.json");

    let value = stdout_of(&covermark(&["extract", "--input", &record]));
    assert_eq!(value.trim(), "97");
}

#[test]
fn solve_reports_a_feasible_optimum() {
    let dir = TempDir::new().unwrap();
    let record = path_str(&dir, "record.json");
    stdout_of(&covermark(&[
        "embed", "--value", "120", "--seed", "3", "--format", "json", "--out", &record,
    ]));
    let solution = stdout_of(&covermark(&[
        "solve",
        "--problem",
        &record,
        "--format",
        "json",
    ]));
    let parsed: serde_json::Value = serde_json::from_str(&solution).unwrap();
    assert_eq!(parsed["feasible"].as_bool(), Some(true));
    assert!(parsed["max_constraint_violation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn attack_then_detect_emits_a_verdict() {
    let dir = TempDir::new().unwrap();
    let record = path_str(&dir, "record.json");
    let attacked = path_str(&dir, "attacked.json");
    stdout_of(&covermark(&[
        "embed", "--value", "120", "--seed", "5", "--format", "json", "--out", &record,
    ]));
    stdout_of(&covermark(&[
        "attack", "--input", &record, "--kind", "deletion", "--seed", "9", "--format", "json",
        "--out", &attacked,
    ]));

    let report = stdout_of(&covermark(&[
        "detect",
        "--record",
        &record,
        "--suspect",
        &attacked,
        "--format",
        "json",
    ]));
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(parsed["watermark_present"].as_bool(), Some(true));
    assert!(parsed["robust"].is_boolean());
}

#[test]
fn experiment_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = path_str(&dir, "config.toml");
    std::fs::write(
        &config,
        "trials = 1\nbase_seed = 6\n\n[[attacks]]\nkind = \"replication\"\n",
    )
    .unwrap();
    let args = [
        "experiment",
        "--config",
        config.as_str(),
        "--format",
        "json",
    ];
    let first = stdout_of(&covermark(&args));
    let second = stdout_of(&covermark(&args));
    assert!(!first.is_empty());
    assert_eq!(first, second);
}

#[test]
fn experiment_flags_override_config() {
    let dir = TempDir::new().unwrap();
    let config = path_str(&dir, "config.toml");
    std::fs::write(
        &config,
        "trials = 3\nbase_seed = 6\n\n[[attacks]]\nkind = \"replication\"\n",
    )
    .unwrap();
    let csv = stdout_of(&covermark(&[
        "experiment",
        "--config",
        &config,
        "--trials",
        "2",
        "--seed",
        "8",
        "--format",
        "csv",
    ]));
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per trial: {csv}");
    assert!(lines[0].starts_with("kind,trial,seed"));
}

#[test]
fn unknown_attack_kind_fails_with_nonzero_exit() {
    let dir = TempDir::new().unwrap();
    let record = path_str(&dir, "record.json");
    stdout_of(&covermark(&[
        "embed", "--value", "120", "--seed", "2", "--format", "json", "--out", &record,
    ]));
    let output = covermark(&["attack", "--input", &record, "--kind", "scramble"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("scramble"),
        "diagnostic names the bad kind: {stderr}"
    );
}

#[test]
fn unknown_flags_and_subcommands_fail() {
    assert!(!covermark(&["--bogus"]).status.success());
    assert!(!covermark(&["frobnicate"]).status.success());
    let missing = covermark(&[
        "detect",
        "--record",
        "/nonexistent",
        "--suspect",
        "/nonexistent",
    ]);
    assert!(!missing.status.success());
}

#[test]
fn tampered_record_fails_extraction() {
    let dir = TempDir::new().unwrap();
    let record = path_str(&dir, "record.json");
    stdout_of(&covermark(&[
        "embed", "--value", "120", "--seed", "1", "--format", "json", "--out", &record,
    ]));
    let text = std::fs::read_to_string(&record).unwrap();
    let mut parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    parsed["watermarked_problem"]["objective_coefficients"][1] = serde_json::Value::from(2.5);
    std::fs::write(&record, serde_json::to_string(&parsed).unwrap()).unwrap();

    let output = covermark(&["extract", "--input", &record]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("tamper"),
        "diagnostic mentions tampering: {stderr}"
    );
}
