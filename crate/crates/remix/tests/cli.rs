//! End-to-end checks of the `remix` binary: exit codes, output files,
//! and argument validation.

use std::process::{Command, Output};

fn remix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remix"))
        .args(args)
        .output()
        .unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process terminated by signal")
}

#[test]
fn train_writes_full_output_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = remix(&[
        "train",
        "--method",
        "remix",
        "--epochs",
        "3",
        "--n-per-class",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for file in [
        "plan.txt",
        "metrics.csv",
        "confusion_final.csv",
        "model.rmxm",
        "train_points.csv",
        "boundary.csv",
        "boundary.pgm",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("top1"), "summary missing from stdout: {stdout}");
}

#[test]
fn erm_skips_mixing_flags_but_still_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("erm");
    let output = remix(&[
        "train",
        "--method",
        "erm",
        "--epochs",
        "2",
        "--n-per-class",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header plus one row per epoch");
}

#[test]
fn invalid_tau_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = remix(&[
        "train",
        "--tau",
        "1.5",
        "--epochs",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));
}

#[test]
fn cutmix_on_points_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = remix(&[
        "train",
        "--method",
        "cutmix",
        "--epochs",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn missing_cifar_dir_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = remix(&[
        "train",
        "--dataset",
        "cifar10",
        "--data-dir",
        dir.path().join("nope").to_str().unwrap(),
        "--epochs",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 3);
}

#[test]
fn unknown_flag_exits_with_config_code() {
    let output = remix(&["train", "--granularity", "fine"]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn tau_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let output = remix(&[
        "tau-sweep",
        "--taus",
        "0.0,0.5",
        "--epochs",
        "2",
        "--n-per-class",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let table = std::fs::read_to_string(out.join("tau_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "tau,top1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[2].starts_with("0.5,"));
}

#[test]
fn sweep_rejects_non_remix_method() {
    let dir = tempfile::tempdir().unwrap();
    let output = remix(&[
        "tau-sweep",
        "--method",
        "mixup",
        "--taus",
        "0.0,0.5",
        "--epochs",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
}
