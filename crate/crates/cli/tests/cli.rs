//! End-to-end runs of the experiment binary: exit codes, output files, and
//! byte-identical summaries for identical config + seed.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wparab")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(sub: &str, config: &Path, out: &Path, seed: u64) -> std::process::Output {
    Command::new(bin())
        .args([
            sub,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
        ])
        .output()
        .expect("binary should run")
}

#[test]
fn muckenhoupt_passes_and_writes_outputs() {
    let dir = std::env::temp_dir().join("wparab_cli_muck");
    let out = run("muckenhoupt", &repo_config("muckenhoupt.toml"), &dir, 0);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("meta.json").exists());
    assert!(dir.join("muckenhoupt.csv").exists());
    let summary = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"all_passed\": true"));
}

#[test]
fn summary_is_byte_identical_for_same_config_and_seed() {
    let d1 = std::env::temp_dir().join("wparab_cli_det1");
    let d2 = std::env::temp_dir().join("wparab_cli_det2");
    for d in [&d1, &d2] {
        let out = run("conjugate", &repo_config("conjugate.toml"), d, 42);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let s1 = std::fs::read(d1.join("summary.json")).unwrap();
    let s2 = std::fs::read(d2.join("summary.json")).unwrap();
    assert_eq!(s1, s2, "summaries must be byte-identical");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = std::env::temp_dir().join("wparab_cli_err");
    // missing file
    let out = run("mms", Path::new("/nonexistent.toml"), &dir, 0);
    assert_eq!(out.status.code(), Some(2));
    // malformed schema
    let bad = std::env::temp_dir().join("wparab_bad.toml");
    std::fs::write(&bad, "nonsense = true\n").unwrap();
    let out = run("mms", &bad, &dir, 0);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_subcommand_exits_with_two() {
    let out = Command::new(bin())
        .args(["frobnicate", "--config", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn assertion_failures_exit_with_one() {
    // an mms run asked for an impossible order fails its assertion but
    // still writes the summary
    let cfg = std::env::temp_dir().join("wparab_strict_mms.toml");
    std::fs::write(
        &cfg,
        "case = \"g2-plus-t\"\nn_x = 1\na = 0.5\nresolutions = [8, 16]\nmin_order = 5.0\n",
    )
    .unwrap();
    let dir = std::env::temp_dir().join("wparab_cli_fail");
    let out = run("mms", &cfg, &dir, 0);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"all_passed\": false"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("order["), "failing assertion must be named: {stderr}");
}

#[test]
fn solve_dumps_field_artifacts() {
    let dir = std::env::temp_dir().join("wparab_cli_solve");
    let out = run("solve", &repo_config("solve.toml"), &dir, 2);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("field.csv").exists());
    assert!(dir.join("field.bin").exists());
    assert!(dir.join("checkpoint_00000.bin").exists());
}
