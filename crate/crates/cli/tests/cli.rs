use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedfuse(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedfuse"))
        .args(args)
        .env("FEDFUSE_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

const RUN: &str = r#"
schema_version = 1
name = "cli"
seeds = [1]

[dataset]
kind = "blobs"
classes = 3
per_class = 20
test_per_class = 10
scale = 0.5

[partition]
clients = 2
alpha = 1.0

[federation]
rounds = 2
participation = 1.0
local_epochs = 1
local_lr = 0.1
local_batch = 8

[[prototypes]]
id = "mlp"
hidden = [4]

[distill]
max_steps = 10
patience = 5

[[strategies]]
kind = "feddf"
"#;

#[test]
fn run_writes_under_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, RUN).unwrap();
    let out = fedfuse(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cli/summary.json").exists());
    assert!(dir.path().join("cli/seed-1/feddf/metrics.jsonl").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("feddf"));
}

#[test]
fn partition_stats_prints_one_line_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, RUN.replace("seeds = [1]", "seeds = [1, 2, 3]")).unwrap();
    let out = fedfuse(&["partition-stats", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    assert!(stdout.lines().all(|l| l.contains("\"mean_entropy\"")));
}

#[test]
fn bound_check_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bound.toml");
    fs::write(&cfg, "schema_version = 1\nname = \"b\"\ninstances = 3\nreference_size = 500\n").unwrap();
    let out = fedfuse(&["bound-check", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("b/bound-report.json")).unwrap();
    assert!(report.contains("\"all_hold\": true"));
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, RUN.replace("alpha = 1.0", "alpha = -1.0")).unwrap();
    let out = fedfuse(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("partition.alpha"));
    assert_eq!(fedfuse(&["run", "/nonexistent.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(fedfuse(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.toml");
    // An absurd learning rate overflows the logits during local training.
    fs::write(&cfg, RUN.replace("local_lr = 0.1", "local_lr = 1e200")).unwrap();
    let out = fedfuse(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
