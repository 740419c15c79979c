use std::path::Path;
use std::process::{Command, Output};

fn cutlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutlab")).args(args).current_dir(dir).output().expect("binary runs")
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"dataset": {"family": {"kind": "lex_ilp", "n": 9, "d": 2}, "count": 1}}"#,
    )
    .unwrap();
    let out = cutlab(&["generate", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset.family.n") && err.contains("dataset.count"), "{err}");

    assert_eq!(cutlab(&["generate"], dir.path()).status.code(), Some(2));
    assert_eq!(cutlab(&["eval", "--bogus"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("ok.json"), r#"{"dataset": {"family": {"kind": "lex_ilp", "n": 2, "d": 2}, "count": 4}}"#)
        .unwrap();
    let out = cutlab(&["eval", "--config", "ok.json", "--policy", "lstm:x.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_writes_a_readable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"dataset": {"family": {"kind": "max_independent_set", "nodes": 8, "edge_prob": 0.3}, "count": 5}}"#,
    )
    .unwrap();
    let out = cutlab(&["generate", "--config", "cfg.json", "--seed", "9", "--out-dir", "data"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = cutlab_core::harness::Dataset::read(&dir.path().join("data")).unwrap();
    assert_eq!(data.instances.len(), 5);
    assert_eq!(data.spec.seed, 9);
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.json"), r#"{"instances": 100}"#).unwrap();
    let out = cutlab(&["verify-theory", "--config", "t.json", "--seed", "0", "--out-dir", "o"], dir.path());
    // this sweep contains d = 1 draws that overrun the iteration bound
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("o/theory.csv").exists());

    std::fs::write(dir.path().join("g.json"), r#"{"seeds": 1}"#).unwrap();
    let out = cutlab(&["grad-check", "--config", "g.json", "--out-dir", "o"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("o/grad_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}
