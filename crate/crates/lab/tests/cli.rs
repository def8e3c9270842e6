//! End-to-end checks of the binary: exit codes, error wording, and the
//! no-partial-output guarantee on configuration failures.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fracperim")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.txt");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_tension_file_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "[experiment]\nkind = relax\n\n[tensions]\nfile = nowhere.txt\n");
    let out_dir = dir.path().join("out");
    let out = run(&["relax", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("config error"), "{stderr}");
    assert!(!out_dir.exists(), "failed run must not leave partial outputs");
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\nkind = relax\n\n[tensions]\nrows = 0 1 ; 1 0\nwhat = 3\n",
    );
    let out = run(&["relax", "--config", &cfg, "--out", "unused"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 6"), "{stderr}");
    assert!(stderr.contains("what"), "{stderr}");
}

#[test]
fn subcommand_must_match_config_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "[experiment]\nkind = relax\n\n[tensions]\nrows = 0 1 ; 1 0\n");
    let out_dir = dir.path().join("out");
    let out = run(&["energy", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("relax"), "{stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn invalid_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "[experiment]\nkind = relax\n\n[tensions]\nrows = 0 1 ; 1 0\n");
    let out = run(&["relax", "--config", &cfg, "--out", "unused", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_without_minimize_section_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "[experiment]\nkind = relax\n\n[tensions]\nrows = 0 1 ; 1 0\n");
    let out = run(&["relax", "--config", &cfg, "--out", "unused", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_of_missing_manifest_fails() {
    let out = run(&["verify", "--manifest", "/nonexistent/manifest.txt"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn successful_run_lists_artifacts_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\nkind = relax\n\n[tensions]\nrows = 0 3 1 ; 3 0 1 ; 1 1 0\n",
    );
    let out_dir = dir.path().join("out");
    let out = run(&["relax", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("relax.csv"), "{stdout}");
    assert!(out_dir.join("relax.csv").exists());
    assert!(out_dir.join("sigma_bar.txt").exists());
    assert!(out_dir.join("manifest.txt").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("[manifest]\nformat = 1\n"), "{manifest}");
}
