//! End-to-end CLI checks through the compiled binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn owaic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owaic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("owaic_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn model_list_names_all_six() {
    let out = owaic(&["model", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["H", "F", "S", "P", "Z", "I"] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "missing model {name} in:\n{text}"
        );
    }
}

#[test]
fn ingest_then_resume_round_trip() {
    let dir = tmp_dir("ingest");
    let stream = dir.join("run.stream");
    let meta = dir.join("partition.txt");
    fs::write(&stream, "waic-stream v1 M=2 mode=conditional\n-1,-2\n-1.5,-2.5\n-0.9,-1.8\n")
        .unwrap();
    fs::write(&meta, "z1\nz2\n").unwrap();
    let ck = dir.join("state.ck");

    let out = owaic(&[
        "waic",
        "ingest",
        "--stream",
        stream.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
        "--save-checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ingest_text = String::from_utf8(out.stdout).unwrap();
    assert!(ingest_text.contains("S=3 samples"), "{ingest_text}");

    // Extend the stream by two samples and resume from the checkpoint.
    let mut longer = fs::read_to_string(&stream).unwrap();
    longer.push_str("-1.1,-2.2\n-0.8,-1.9\n");
    fs::write(&stream, longer).unwrap();
    let out = owaic(&[
        "waic",
        "resume",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--stream",
        stream.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resume_text = String::from_utf8(out.stdout).unwrap();
    assert!(resume_text.contains("S=5 samples"), "{resume_text}");
}

#[test]
fn meta_mismatch_is_a_data_error() {
    let dir = tmp_dir("mismatch");
    let stream = dir.join("run.stream");
    let meta = dir.join("partition.txt");
    fs::write(&stream, "waic-stream v1 M=2 mode=conditional\n-1,-2\n").unwrap();
    fs::write(&meta, "z1 z2 z3\n").unwrap();
    let out = owaic(&[
        "waic",
        "ingest",
        "--stream",
        stream.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_stream_line_is_a_data_error() {
    let dir = tmp_dir("badline");
    let stream = dir.join("run.stream");
    let meta = dir.join("partition.txt");
    fs::write(&stream, "waic-stream v1 M=1 mode=conditional\n0.5\nwat\n").unwrap();
    fs::write(&meta, "z1\n").unwrap();
    let out = owaic(&[
        "waic",
        "ingest",
        "--stream",
        stream.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(owaic(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(owaic(&["study", "run"]).status.code(), Some(1));
    assert_eq!(owaic(&["--help"]).status.code(), Some(0));
}

#[test]
fn study_run_writes_reports() {
    let dir = tmp_dir("study");
    let config = dir.join("study.json");
    fs::write(
        &config,
        r#"{
  "family": "hier1",
  "replicates": 2,
  "group_count": 3,
  "group_size": 4,
  "keep": 60,
  "burn_in": 30,
  "k_inner": 8,
  "master_seed": 7,
  "dump_datasets": true
}"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = owaic(&[
        "study",
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["means.csv", "selection.csv", "replicates.csv", "report.json", "report.txt"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    assert!(out_dir.join("datasets").join("replicate_0000.txt").exists());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("proportion correct"), "{text}");
}

#[test]
fn study_run_honors_out_dir_env() {
    let dir = tmp_dir("study_env");
    let config = dir.join("study.json");
    fs::write(
        &config,
        r#"{"family":"hier1","replicates":1,"group_count":2,"group_size":3,"keep":20,"burn_in":10,"k_inner":4,"master_seed":3}"#,
    )
    .unwrap();
    let out_dir = dir.join("env_out");
    let out = Command::new(env!("CARGO_BIN_EXE_owaic"))
        .args(["study", "run", "--config", config.to_str().unwrap()])
        .env("OWAIC_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("means.csv").exists());

    // Without --out and without the env var: usage error.
    let out = Command::new(env!("CARGO_BIN_EXE_owaic"))
        .args(["study", "run", "--config", config.to_str().unwrap()])
        .env_remove("OWAIC_OUT_DIR")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
