//! Command-line behavior: flag overrides, exit codes, artifact determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sgflow")
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("sgflow_cli_{}_{name}", std::process::id()))
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("missing {file}: {e}"))
}

#[test]
fn single_noiseless_run_has_zero_standard_errors() {
    let dir = tmp("single");
    let out = Command::new(bin())
        .args([
            "--runs", "1", "--noise-scale", "0", "--horizon", "1", "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(read(&dir, "ensemble_stats.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let se_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("se_"))
        .map(|(i, _)| i)
        .collect();
    assert!(!se_cols.is_empty());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        for &c in &se_cols {
            assert_eq!(fields[c], "0", "nonzero standard error in: {line}");
        }
    }
    // a single run also exports its trajectory
    assert!(dir.join("trajectory.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn same_seed_produces_identical_artifacts() {
    let dir1 = tmp("seed7_first");
    let dir2 = tmp("seed7_second");
    for dir in [&dir1, &dir2] {
        let out = Command::new(bin())
            .args([
                "--seed", "7", "--runs", "8", "--horizon", "1", "--out",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&dir1, "ensemble_stats.csv"), read(&dir2, "ensemble_stats.csv"));
    assert_eq!(read(&dir1, "report.txt"), read(&dir2, "report.txt"));
    let _ = std::fs::remove_dir_all(&dir1);
    let _ = std::fs::remove_dir_all(&dir2);
}

#[test]
fn unparseable_config_exits_one() {
    let path = tmp("bad_config.toml");
    std::fs::write(&path, "this is not toml = [")
        .unwrap();
    let out = Command::new(bin())
        .args(["--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = std::fs::remove_file(&path);
}

#[test]
fn out_of_range_exponent_exits_one_before_simulating() {
    let dir = tmp("bad_a");
    let out = Command::new(bin())
        .args(["--a", "0.5", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.exists(), "no artifacts may be written for invalid configs");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("exponent"), "unexpected message: {err}");
}

#[test]
fn sweep_rejects_out_of_range_exponent_in_list() {
    let path = tmp("sweep_config.toml");
    let base = include_str!("../../../configs/six_agent.toml");
    let patched = base.replace("a_values = [0.6, 0.75, 0.95]", "a_values = [0.6, 0.5]");
    assert_ne!(base, patched);
    std::fs::write(&path, patched).unwrap();
    let dir = tmp("sweep_bad");
    let out = Command::new(bin())
        .args([
            "--config",
            path.to_str().unwrap(),
            "--experiment",
            "sweep",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.exists());
    let _ = std::fs::remove_file(&path);
}

#[test]
fn unknown_experiment_kind_exits_one() {
    let out = Command::new(bin())
        .args(["--experiment", "teleport"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn consensus_only_fails_with_code_two_when_horizon_too_short() {
    // 0.5 s is far too short to contract to 1e-6
    let dir = tmp("consensus_short");
    let out = Command::new(bin())
        .args([
            "--experiment",
            "consensus-only",
            "--horizon",
            "0.5",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // artifacts are still written for inspection
    assert!(dir.join("bounds.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn consensus_only_succeeds_with_long_horizon() {
    let dir = tmp("consensus_long");
    let out = Command::new(bin())
        .args([
            "--experiment",
            "consensus-only",
            "--horizon",
            "20",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn manifest_records_config_hash() {
    let dir = tmp("hash");
    let out = Command::new(bin())
        .args(["--runs", "2", "--horizon", "0.5", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = String::from_utf8(read(&dir, "manifest.toml")).unwrap();
    assert!(manifest.contains("[manifest]"));
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("package_version"));
    let _ = std::fs::remove_dir_all(&dir);
}
