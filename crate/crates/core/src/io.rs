//! File formats: CSV tables with 17-significant-digit floats and JSON weights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::{LabeledDataset, Transition};
use crate::vehicle::VehicleState;

/// Scientific notation with 17 significant digits; parses back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { file: path.display().to_string(), msg: msg.into() }
}

/// Header plus rows of a simple comma-separated table (no quoting).
pub fn parse_csv(path: &Path, text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines.next().ok_or_else(|| parse_err(path, "missing header"))?.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(parse_err(path, format!("row {} has {} fields, expected {}", n + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_err(path, format!("bad number {s:?}")))
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let row: Vec<String> = cells.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

fn floats(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| fmt_f64(*x))
}

/// `label,dim0,...,dimN` with `label` in `{safe, unsafe}`.
pub fn dataset_csv(ds: &LabeledDataset) -> String {
    let n = ds.dim().unwrap_or(0);
    let mut s = String::from("label");
    for i in 0..n {
        let _ = write!(s, ",dim{i}");
    }
    s.push('\n');
    for (label, set) in [("safe", &ds.safe), ("unsafe", &ds.unsafe_)] {
        for p in set.iter() {
            push_row(&mut s, std::iter::once(label.to_string()).chain(floats(p)));
        }
    }
    s
}

pub fn transitions_csv(ts: &[Transition]) -> String {
    let n = ts.first().map_or(0, |t| t.s.len());
    let mut head: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    head.extend((0..n).map(|i| format!("next{i}")));
    head.push("dt".into());
    let mut s = head.join(",") + "\n";
    for t in ts {
        push_row(&mut s, floats(&t.s).chain(floats(&t.s_next)).chain(std::iter::once(fmt_f64(t.dt))));
    }
    s
}

const STATE_COLS: [&str; 6] = ["x", "y", "theta", "v_x", "v_y", "r"];

pub fn archive_csv(archive: &[(Vec<f64>, VehicleState)]) -> String {
    let n = archive.first().map_or(0, |a| a.0.len());
    let mut head: Vec<String> = (0..n).map(|i| format!("obs{i}")).collect();
    head.extend(STATE_COLS.iter().map(|c| c.to_string()));
    let mut s = head.join(",") + "\n";
    for (o, st) in archive {
        push_row(&mut s, floats(o).chain(floats(&st.to_array())));
    }
    s
}

fn float_rows(path: &Path, rows: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| r.iter().map(|c| parse_f64(path, c)).collect()).collect()
}

/// Reads the dataset, transitions, and archive files written by `collect`.
pub fn read_dataset(dataset: &Path, transitions: &Path, archive: &Path) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::default();
    let (_, rows) = parse_csv(dataset, &read_text(dataset)?)?;
    for r in &rows {
        let p: Vec<f64> = r[1..].iter().map(|c| parse_f64(dataset, c)).collect::<Result<_>>()?;
        match r[0].as_str() {
            "safe" => ds.safe.push(p),
            "unsafe" => ds.unsafe_.push(p),
            other => return Err(parse_err(dataset, format!("unknown label {other:?}"))),
        }
    }
    let (head, rows) = parse_csv(transitions, &read_text(transitions)?)?;
    let n = (head.len().saturating_sub(1)) / 2;
    for r in float_rows(transitions, &rows)? {
        ds.transitions.push(Transition { s: r[..n].to_vec(), s_next: r[n..2 * n].to_vec(), dt: r[2 * n] });
    }
    let (head, rows) = parse_csv(archive, &read_text(archive)?)?;
    let n = head.len().checked_sub(6).ok_or_else(|| parse_err(archive, "missing state columns"))?;
    for r in float_rows(archive, &rows)? {
        ds.archive.push((r[..n].to_vec(), VehicleState::from_slice(&r[n..])));
    }
    Ok(ds)
}

/// Generic numeric table writer.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",") + "\n";
    for r in rows {
        push_row(&mut s, floats(r));
    }
    s
}
