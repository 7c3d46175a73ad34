//! End-to-end checks of the `sph` binary: exit codes, listing text, config
//! validation, and a miniature run that must produce the full output set.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sph"))
        .args(args)
        .env_remove("SPH_THREADS")
        .output()
        .expect("binary runs")
}

fn write_tiny_config(path: &Path) {
    fs::write(
        path,
        "[experiment]\n\
         preset = custom\n\
         duration = 0.05\n\
         frame_interval = 5\n\
         seed = 7\n\
         [relaxation]\n\
         max_steps = 200\n\
         [scene]\n\
         container_min = -0.3, -0.3, 0\n\
         container_size = 0.6, 0.6, 0.6\n\
         fluid_min = -0.15, -0.15, 0.05\n\
         fluid_max = 0.15, 0.15, 0.35\n",
    )
    .unwrap();
}

#[test]
fn list_prints_every_preset() {
    let out = sph(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("resting-sheet: 508 particles"));
    assert!(text.contains("resting-bulk: 2×2×8 m container"));
    assert_eq!(text.lines().count(), 6, "five presets plus custom:\n{text}");
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    write_tiny_config(&good);
    let out = sph(&["validate", good.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[experiment]\npreset = resting-sheet\n[solver]\ngamma = -1\n").unwrap();
    let out = sph(&["validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 4"), "error names the line: {stderr}");

    let out = sph(&["validate", dir.path().join("absent.cfg").to_str().unwrap()]);
    assert!(!out.status.success(), "missing file is an error");
}

#[test]
fn run_writes_the_full_output_set_and_an_echo_that_revalidates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    write_tiny_config(&cfg);
    let out_dir = dir.path().join("results");
    let out = sph(&[
        "run",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "config_echo",
        "metrics.csv",
        "hist_pressure_bulk.csv",
        "hist_pressure_boundary.csv",
        "hist_speed_bulk.csv",
        "hist_speed_boundary.csv",
        "snapshot_relaxed.csv",
        "snapshot_final.csv",
        "summary.txt",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let echo = fs::read_to_string(out_dir.join("config_echo")).unwrap();
    assert!(echo.contains("seed = 5"), "echo pins the effective seed:\n{echo}");
    let out = sph(&["validate", out_dir.join("config_echo").to_str().unwrap()]);
    assert!(out.status.success(), "config_echo must itself be a valid config");
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("status = ok"), "summary: {summary}");
}

#[test]
fn thread_override_is_honored_and_garbage_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_sph"))
        .args(["list"])
        .env("SPH_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = Command::new(env!("CARGO_BIN_EXE_sph"))
        .args(["list"])
        .env("SPH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
