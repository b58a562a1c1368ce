use std::path::Path;
use std::process::{Command, Output};

use softnash_core::config::ExperimentConfig;
use softnash_core::harness::TRIALS_HEADER;
use softnash_core::trial::TRACE_HEADER;

fn softnash(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softnash")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = softnash(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Short trials keep debug-build runs quick.
fn short_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::default();
    cfg.lab.trial.duration_s = 3.0;
    cfg.lab.human.deviations.clear();
    cfg.seeds = vec![1, 2];
    let path = dir.join("short.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn trial_prints_metrics_and_dumps_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["trial", "--mode", "NASH", "--tau", "2", "--seed", "7", "--dump-trace", "--config", &cfg, "--out", out]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["mode"], "NASH_2");
    assert_eq!(v["seed"], 7);
    assert!(v["metrics"]["rms"].as_f64().unwrap() > 0.0);

    let trace = std::fs::read_to_string(dir.path().join("trace_NASH_2_seed7.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    assert_eq!(lines.count(), 300);
}

#[test]
fn sweep_writes_rows_in_mode_seed_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("sweep");
    let stdout = ok(&["sweep", "--tau-grid", "0,2", "--seeds", "2", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("best mode by balanced score:"));
    let csv = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TRIALS_HEADER);
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(
        keys,
        ["CLASSIC,NA,1", "CLASSIC,NA,2", "NASH_0,0,1", "NASH_0,0,2", "NASH_2,2,1", "NASH_2,2,2", "NONE,NA,1", "NONE,NA,2"]
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn run_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--parallel", "1"]);
    ok(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--parallel", "3"]);
    for f in ["trials.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_arguments_fail() {
    assert!(!softnash(&["trial", "--mode", "WARP", "--seed", "1"]).status.success());
    assert!(!softnash(&["trial", "--mode", "NASH", "--seed", "1"]).status.success());
    assert!(!softnash(&["sweep", "--tau-grid", "0,-1", "--seeds", "1"]).status.success());
    assert!(!softnash(&["run", "--config", "/nonexistent/cfg.json"]).status.success());
}
