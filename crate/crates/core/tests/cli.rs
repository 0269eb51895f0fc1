//! End-to-end CLI runs on the small smoke configuration.

mod common;

use std::path::Path;
use std::process::Command;

use common::cli::{reproducibility, run, snapshot, BIN};

#[test]
fn pipeline_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    reproducibility(tmp.path()).unwrap();
    let files = snapshot(&tmp.path().join("a"));
    for f in ["trajectory.csv", "policy.json", "dataset.csv", "barrier.json", "report.csv", "summary.txt", "history.csv", "barrier_best.json", "monitor_T50.csv", "rates.csv"] {
        assert!(files.contains_key(Path::new(f)), "missing {f}");
    }
}

#[test]
fn loop_round_limit_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // missing prerequisites are validation errors
    assert_eq!(run(&["certify"], d), 1);
    assert_eq!(Command::new(BIN).arg("no-such-command").status().unwrap().code(), Some(1));
    assert_eq!(Command::new(BIN).arg("--help").status().unwrap().code(), Some(0));
    let bad = d.join("bad.cfg");
    std::fs::write(&bad, "barrier.epochs = many\n").unwrap();
    let st = Command::new(BIN).args(["train-policy", "--config"]).arg(&bad).arg("--out").arg(d).status().unwrap();
    assert_eq!(st.code(), Some(1));

    for cmd in [&["train-policy"][..], &["collect"], &["loop", "--max-rounds", "1"]] {
        assert_eq!(run(cmd, d), 0, "{cmd:?} failed");
    }
    let rounds: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("round_"))
        .collect();
    assert_eq!(rounds.len(), 1);
    assert!(d.join("round_0/barrier.json").exists());
}

#[test]
fn report_regeneration_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for cmd in [&["train-policy"][..], &["collect"], &["train-barrier"], &["certify"]] {
        assert_eq!(run(cmd, d), 0, "{cmd:?} failed");
    }
    let before = (std::fs::read(d.join("summary.txt")).unwrap(), std::fs::read(d.join("report.svg")).unwrap());
    std::fs::remove_file(d.join("report.svg")).unwrap();
    assert_eq!(run(&["report"], d), 0);
    assert_eq!(before, (std::fs::read(d.join("summary.txt")).unwrap(), std::fs::read(d.join("report.svg")).unwrap()));
}
