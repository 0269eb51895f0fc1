//! Grid cover of the input space and per-cell certification of the Lie condition.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use super::bounds::{dynamics_bounds, grad_bounds, lie_lower_bound, output_bounds, DynamicsBoundConfig};
use super::interval::{Hyperbox, Interval};
use crate::barrier::BarrierNet;
use crate::error::{check_dim, Error, Result};
use crate::vehicle::ClosedLoop;

/// Uniform grid over `[lo, hi]` with `cells[i]` cells along dimension `i`.
/// Flat indices are row-major with the last dimension fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        check_dim(lo.len(), cells.len())?;
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || cells.contains(&0) {
            return Err(Error::InvalidArgument("grid needs lo < hi and at least one cell per dimension".into()));
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half cell width per dimension.
    pub fn delta(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.hi[i] - self.lo[i]) / self.cells[i] as f64).collect()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = flat % self.cells[i];
            flat /= self.cells[i];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.cells).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn cell_box(&self, flat: usize) -> Hyperbox {
        let idx = self.unflatten(flat);
        let delta = self.delta();
        let center = (0..self.dim()).map(|i| self.lo[i] + (2 * idx[i] + 1) as f64 * delta[i]).collect();
        Hyperbox { center, delta }
    }

    /// Flat index of the cell containing `x`, if inside the grid.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            if !(self.lo[i] <= x[i] && x[i] <= self.hi[i]) {
                return None;
            }
            let w = (self.hi[i] - self.lo[i]) / self.cells[i] as f64;
            idx.push((((x[i] - self.lo[i]) / w) as usize).min(self.cells[i] - 1));
        }
        Some(self.flatten(&idx))
    }

    /// Flat indices within Chebyshev index distance `r` of `flat`, excluding itself.
    pub fn neighbors(&self, flat: usize, r: usize) -> Vec<usize> {
        let c = self.unflatten(flat);
        let ranges: Vec<(usize, usize)> = (0..self.dim()).map(|i| (c[i].saturating_sub(r), (c[i] + r).min(self.cells[i] - 1))).collect();
        let mut out = Vec::new();
        let mut cur: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let f = self.flatten(&cur);
            if f != flat {
                out.push(f);
            }
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if cur[d] < ranges[d].1 {
                    cur[d] += 1;
                    break;
                }
                cur[d] = ranges[d].0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    /// `B > 0` on the whole cell.
    Interior,
    /// `B < 0` on the whole cell.
    Exterior,
    Certified,
    Violated,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Interior => "interior",
            Self::Exterior => "exterior",
            Self::Certified => "certified",
            Self::Violated => "violated",
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Self::Certified | Self::Violated)
    }
}

impl std::str::FromStr for CellStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "interior" => Self::Interior,
            "exterior" => Self::Exterior,
            "certified" => Self::Certified,
            "violated" => Self::Violated,
            _ => return Err(Error::InvalidArgument(format!("unknown cell status {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub bbox: Hyperbox,
    pub b_bounds: Interval,
    /// Lower bound on the Lie derivative; `-inf` when the flow could not be probed.
    pub lie_lower: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyConfig {
    pub dynamics: DynamicsBoundConfig,
    /// Certified requires `lie_lower > lie_margin`.
    pub lie_margin: f64,
    /// Extra rings of cells around zero-crossing cells that are also checked.
    pub boundary_dilation: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { dynamics: DynamicsBoundConfig::default(), lie_margin: 0.0, boundary_dilation: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub grid: GridSpec,
    pub cells: Vec<GridCell>,
    pub n_boundary: usize,
    pub n_certified: usize,
    pub n_violated: usize,
    /// Cells whose flow probe failed; counted as violated.
    pub n_probe_failures: usize,
    pub epsilon: f64,
    pub config: CertifyConfig,
    pub dt: f64,
}

impl CertReport {
    pub fn certified_fraction(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn boundary_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.status.is_boundary())
    }

    pub fn violated_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.status == CellStatus::Violated)
    }

    pub fn certified_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.status == CellStatus::Certified)
    }

    /// One row per boundary cell: center coordinates, value bounds, Lie bound, status.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.grid.dim() {
            let _ = write!(s, "c{i},");
        }
        s.push_str("b_lo,b_hi,lie_lower,status\n");
        for c in self.boundary_cells() {
            for x in &c.bbox.center {
                let _ = write!(s, "{},", crate::io::fmt_f64(*x));
            }
            let lie = c.lie_lower.map_or("nan".to_string(), crate::io::fmt_f64);
            let _ = writeln!(
                s,
                "{},{},{},{}",
                crate::io::fmt_f64(c.b_bounds.lo),
                crate::io::fmt_f64(c.b_bounds.hi),
                lie,
                c.status.as_str()
            );
        }
        s
    }

    pub fn summary(&self, config_hash: &str) -> String {
        let f = crate::io::fmt_f64;
        let d = &self.config.dynamics;
        format!(
            "cells = {}\nboundary = {}\ncertified = {}\nviolated = {}\nprobe_failures = {}\nepsilon = {}\ncertified_fraction = {}\n\
             lipschitz = {}\njacobian_bloat = {}\nprobe_fraction = {}\nlie_margin = {}\nboundary_dilation = {}\ndt = {}\nconfig_hash = {}\n",
            self.grid.len(),
            self.n_boundary,
            self.n_certified,
            self.n_violated,
            self.n_probe_failures,
            f(self.epsilon),
            f(self.certified_fraction()),
            f(d.lipschitz),
            f(d.jacobian_bloat),
            f(d.probe_fraction),
            f(self.config.lie_margin),
            self.config.boundary_dilation,
            f(self.dt),
            config_hash
        )
    }

    /// Rebuilds the boundary cells written by [`CertReport::to_csv`].
    /// Interior and exterior cells are not stored and are absent from `cells`.
    pub fn from_csv(grid: GridSpec, config: CertifyConfig, dt: f64, text: &str) -> Result<Self> {
        let path = std::path::Path::new("report.csv");
        let (header, rows) = crate::io::parse_csv(path, text)?;
        let n = grid.dim();
        if header.len() != n + 4 {
            return Err(Error::Parse { file: "report.csv".into(), msg: format!("expected {} columns, got {}", n + 4, header.len()) });
        }
        let mut cells = Vec::with_capacity(rows.len());
        for row in &rows {
            let num = |i: usize| crate::io::parse_f64(path, &row[i]);
            let center = (0..n).map(num).collect::<Result<Vec<f64>>>()?;
            let index = grid
                .locate(&center)
                .ok_or_else(|| Error::Parse { file: "report.csv".into(), msg: format!("cell center {center:?} outside the grid") })?;
            let status: CellStatus = row[n + 3].parse()?;
            let lie_lower = if row[n + 2] == "nan" { None } else { Some(num(n + 2)?) };
            cells.push(GridCell { index, bbox: grid.cell_box(index), b_bounds: Interval::new(num(n)?, num(n + 1)?)?, lie_lower, status });
        }
        let n_certified = cells.iter().filter(|c| c.status == CellStatus::Certified).count();
        let n_violated = cells.iter().filter(|c| c.status == CellStatus::Violated).count();
        let n_probe_failures = cells.iter().filter(|c| c.lie_lower == Some(f64::NEG_INFINITY)).count();
        let n_boundary = n_certified + n_violated;
        let epsilon = if n_boundary == 0 { 0.0 } else { n_violated as f64 / n_boundary as f64 };
        Ok(Self { grid, cells, n_boundary, n_certified, n_violated, n_probe_failures, epsilon, config, dt })
    }

    /// Boundary cells projected onto the first two dimensions; violated cells drawn last.
    pub fn to_svg(&self) -> String {
        let (w, h) = (600.0, 600.0);
        let g = &self.grid;
        let (x0, x1) = (g.lo[0], g.hi[0]);
        let (y0, y1) = if g.dim() > 1 { (g.lo[1], g.hi[1]) } else { (-1.0, 1.0) };
        let sx = |x: f64| (x - x0) / (x1 - x0) * w;
        let sy = |y: f64| h - (y - y0) / (y1 - y0) * h;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <style>.certified{{fill:#2e7d32;stroke:none}}.violated{{fill:#c62828;stroke:none}}</style>\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
        );
        for status in [CellStatus::Certified, CellStatus::Violated] {
            for c in self.cells.iter().filter(|c| c.status == status) {
                let (cx, dx) = (c.bbox.center[0], c.bbox.delta[0]);
                let (cy, dy) = if g.dim() > 1 { (c.bbox.center[1], c.bbox.delta[1]) } else { (0.0, 1.0) };
                let _ = writeln!(
                    s,
                    "<rect class=\"{}\" x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\"/>",
                    status.as_str(),
                    sx(cx - dx),
                    sy(cy + dy),
                    sx(cx + dx) - sx(cx - dx),
                    sy(cy - dy) - sy(cy + dy)
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Value bounds for every grid cell, in flat order.
pub fn value_bounds(net: &BarrierNet, grid: &GridSpec) -> Result<Vec<Interval>> {
    check_dim(net.input, grid.dim())?;
    (0..grid.len()).into_par_iter().map(|k| output_bounds(net, &grid.cell_box(k))).collect()
}

/// Certifies the Lie condition on every zero-crossing cell (plus dilation rings).
pub fn certify_grid(net: &BarrierNet, sys: &impl ClosedLoop, grid: &GridSpec, cfg: &CertifyConfig) -> Result<CertReport> {
    check_dim(sys.dim(), grid.dim())?;
    let bounds = value_bounds(net, grid)?;
    let mut check = vec![false; grid.len()];
    let mut any = false;
    for (k, b) in bounds.iter().enumerate() {
        if b.straddles(0.0) {
            any = true;
            check[k] = true;
            if cfg.boundary_dilation > 0 {
                for n in grid.neighbors(k, cfg.boundary_dilation) {
                    check[n] = true;
                }
            }
        }
    }
    if !any {
        return Err(Error::DegenerateBarrier);
    }
    let results: Vec<(usize, Option<f64>)> = (0..grid.len())
        .into_par_iter()
        .filter(|k| check[*k])
        .map(|k| {
            let bbox = grid.cell_box(k);
            let lie = grad_bounds(net, &bbox)
                .and_then(|g| Ok((g, dynamics_bounds(sys, &bbox, &cfg.dynamics)?)))
                .and_then(|(g, f)| lie_lower_bound(&g, &f));
            (k, lie.ok())
        })
        .collect();
    let mut lie = vec![None; grid.len()];
    let mut probe_failures = 0;
    for (k, l) in results {
        match l {
            Some(v) => lie[k] = Some(v),
            None => {
                probe_failures += 1;
                lie[k] = Some(f64::NEG_INFINITY);
            }
        }
    }
    if probe_failures > 0 {
        warn!("{probe_failures} cells could not be probed and are reported as violated");
    }
    let cells: Vec<GridCell> = bounds
        .into_iter()
        .enumerate()
        .map(|(k, b)| {
            let status = match lie[k] {
                Some(l) if l > cfg.lie_margin => CellStatus::Certified,
                Some(_) => CellStatus::Violated,
                None if b.lo >= 0.0 => CellStatus::Interior,
                None if b.hi <= 0.0 => CellStatus::Exterior,
                // straddling cells always carry a Lie bound
                None => unreachable!(),
            };
            GridCell { index: k, bbox: grid.cell_box(k), b_bounds: b, lie_lower: lie[k], status }
        })
        .collect();
    let n_certified = cells.iter().filter(|c| c.status == CellStatus::Certified).count();
    let n_violated = cells.iter().filter(|c| c.status == CellStatus::Violated).count();
    let n_boundary = n_certified + n_violated;
    Ok(CertReport {
        grid: grid.clone(),
        cells,
        n_boundary,
        n_certified,
        n_violated,
        n_probe_failures: probe_failures,
        epsilon: n_violated as f64 / n_boundary as f64,
        config: *cfg,
        dt: sys.dt(),
    })
}
