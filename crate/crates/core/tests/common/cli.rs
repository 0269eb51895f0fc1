//! Driving the `abarrier` binary on the smoke configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const BIN: &str = env!("CARGO_BIN_EXE_abarrier");

/// Every subcommand, in dependency order.
pub const PIPELINE: &[&[&str]] = &[
    &["train-policy"],
    &["simulate"],
    &["collect"],
    &["train-barrier"],
    &["certify"],
    &["loop"],
    &["monitor"],
    &["compare"],
    &["report"],
];

pub fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg")
}

/// Exit code of `abarrier <args> --config smoke.cfg --out <out>`.
pub fn run(args: &[&str], out: &Path) -> i32 {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap()
        .code()
        .unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the whole pipeline into two directories and lists files that differ or exist in only one.
pub fn reproducibility(root: &Path) -> Result<usize, String> {
    let (a, b) = (root.join("a"), root.join("b"));
    for dir in [&a, &b] {
        for cmd in PIPELINE {
            let code = run(cmd, dir);
            if code != 0 {
                return Err(format!("{cmd:?} exited with {code}"));
            }
        }
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let mut bad: Vec<String> = sa.keys().chain(sb.keys()).filter(|k| sa.get(*k) != sb.get(*k)).map(|k| k.display().to_string()).collect();
    bad.dedup();
    if bad.is_empty() {
        Ok(sa.len())
    } else {
        Err(format!("differing files: {}", bad.join(", ")))
    }
}
