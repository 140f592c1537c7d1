//! End-to-end tests of the `hfcl` binary: flags, config files, exit
//! codes, and output files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn hfcl_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hfcl"))
}

fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let images = dir.join("images.idx");
    let labels = dir.join("labels.idx");
    hfcl::fixtures::write_synthetic_idx(&images, &labels, 1600, 28, 28, 0).unwrap();
    (images, labels)
}

#[test]
fn successful_run_exits_zero_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = dataset(dir.path());
    let out = dir.path().join("m.csv");
    let status = hfcl_bin()
        .args(["--mode", "fl", "--rounds", "3", "--seed", "1"])
        .arg("--images")
        .arg(&images)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("round,"));
    assert!(text.contains("\n# {"));
}

#[test]
fn bad_flags_exit_nonzero_with_one_line_reason() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = dataset(dir.path());
    let output = hfcl_bin()
        .args(["--mode", "fl", "--passive", "3"])
        .arg("--images")
        .arg(&images)
        .arg("--labels")
        .arg(&labels)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.trim().lines().count() == 1, "stderr: {err}");
    assert!(err.contains("passive"));
}

#[test]
fn missing_mode_is_reported() {
    let output = hfcl_bin().output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("mode"));
}

#[test]
fn config_file_drives_a_run_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = dataset(dir.path());
    let out = dir.path().join("from-config.csv");
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "mode = hfcl\npassive = 5\nrounds = 3\nimages = {}\nlabels = {}\nout = {}\n",
            images.display(),
            labels.display(),
            out.display()
        ),
    )
    .unwrap();

    let status = hfcl_bin().arg(&config).status().unwrap();
    assert!(status.success());
    assert!(out.exists());

    // Same config, but the flag moves the output elsewhere.
    let out2 = dir.path().join("override.csv");
    let status = hfcl_bin().arg(&config).arg("--out").arg(&out2).status().unwrap();
    assert!(status.success());
    assert!(out2.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "mode = fl\nmystery = 1\n").unwrap();
    let output = hfcl_bin().arg(&config).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("mystery"));
}

#[test]
fn sweep_writes_an_aggregated_table() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = dataset(dir.path());
    let out = dir.path().join("sweep.csv");
    let status = hfcl_bin()
        .args(["--mode", "hfcl", "--rounds", "2", "--sweep", "L=0,5", "--seeds", "0,1"])
        .arg("--images")
        .arg(&images)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "variable,value,n_seeds,mean_val_acc_pct,std_val_acc_pct");
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("L,0,2,"));
    assert!(text.lines().nth(2).unwrap().starts_with("L,5,2,"));
}

#[test]
fn datagen_binary_produces_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("gen-images.idx");
    let labels = dir.path().join("gen-labels.idx");
    let status = Command::new(env!("CARGO_BIN_EXE_hfcl-datagen"))
        .args(["--count", "50", "--side", "28", "--seed", "3"])
        .arg("--images")
        .arg(&images)
        .arg("--labels")
        .arg(&labels)
        .status()
        .unwrap();
    assert!(status.success());
    let samples = hfcl::data::load_idx(&images, &labels).unwrap();
    assert_eq!(samples.len(), 50);
}
