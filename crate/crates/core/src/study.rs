//! Escape-rate comparison of controllers started inside the barrier's safe region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::barrier::BarrierNet;
use crate::certify::{value_bounds, GridSpec};
use crate::controllers::{rollout, Controller};
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::obs::{Archive, ObsDim};
use crate::vehicle::{Simulator, VehicleState};

/// Uniform draws from the union of cells whose value lower bound is positive.
pub fn interior_starts(net: &BarrierNet, grid: &GridSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let interior: Vec<usize> = value_bounds(net, grid)?.iter().enumerate().filter(|(_, b)| b.lo > 0.0).map(|(k, _)| k).collect();
    if interior.is_empty() {
        return Err(Error::NoInteriorCells);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let b = grid.cell_box(interior[rng.random_range(0..interior.len())]);
            b.center.iter().zip(&b.delta).map(|(c, d)| c + d * rng.random_range(-1.0..=1.0)).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeRate {
    pub controller: String,
    pub escapes: usize,
    pub total: usize,
}

impl UnsafeRate {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.escapes as f64 / self.total as f64
        }
    }
}

/// Whether a rollout leaves `B >= 0` within `horizon` steps; early termination counts as leaving.
pub fn escapes(net: &BarrierNet, obs: &[Vec<f64>], horizon: usize) -> bool {
    obs.len() < horizon || obs.iter().take(horizon).any(|z| net.eval_unchecked(z) < 0.0)
}

/// Per-controller fraction of starts that escape.
///
/// `rollout(c, i, z, horizon)` returns the observations after steps
/// `1..=horizon` of controller `c` from start `i` at `z` (shorter if it terminated).
pub fn unsafe_rate_study<F>(net: &BarrierNet, names: &[String], starts: &[Vec<f64>], horizon: usize, rollout: F) -> Result<Vec<UnsafeRate>>
where
    F: Fn(usize, usize, &[f64], usize) -> Result<Vec<Vec<f64>>> + Sync,
{
    names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let flags: Vec<bool> = starts
                .par_iter()
                .enumerate()
                .map(|(i, z)| {
                    if horizon == 0 {
                        return Ok(false);
                    }
                    Ok(escapes(net, &rollout(c, i, z, horizon)?, horizon))
                })
                .collect::<Result<_>>()?;
            Ok(UnsafeRate { controller: name.clone(), escapes: flags.iter().filter(|f| **f).count(), total: starts.len() })
        })
        .collect()
}

pub type ControllerFactory = Box<dyn Fn(u64) -> Box<dyn Controller> + Sync>;

/// Vehicle rollouts for the study: each start is completed from the archive
/// and placed at a start-dependent arc length on the simulator's track.
pub struct VehicleStudy<'a> {
    pub sim: &'a Simulator,
    pub archive: &'a Archive,
    pub controllers: Vec<(String, ControllerFactory)>,
    pub crash_d_e: f64,
    pub seed: u64,
}

impl VehicleStudy<'_> {
    pub fn names(&self) -> Vec<String> {
        self.controllers.iter().map(|c| c.0.clone()).collect()
    }

    pub fn start_state(&self, i: usize, z: &[f64]) -> Result<VehicleState> {
        let norm = self.archive.normalizer();
        let o = norm.denormalize(z);
        let src = self.archive.entries()[self.archive.nearest(&o)?].1;
        let s = (i as f64 * 0.618_033_988_749_894_9).fract() * self.sim.path().length();
        let base = self.sim.state_at(s, 0.0, 0.0, src.v_x, src.v_y, src.r);
        Ok(self.archive.spec().apply(self.sim, &base, &o))
    }

    /// Full trajectory of controller `c` from start `i`.
    pub fn trajectory(&self, c: usize, i: usize, z: &[f64], horizon: usize) -> Result<crate::controllers::Trajectory> {
        let init = self.start_state(i, z)?;
        let mut ctrl = (self.controllers[c].1)(crate::seeds::derive_seed(self.seed, i as u64));
        let mut sim = self.sim.clone();
        rollout(&mut sim, ctrl.as_mut(), init, horizon, self.crash_d_e)
    }

    pub fn observations(&self, c: usize, i: usize, z: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>> {
        let traj = self.trajectory(c, i, z, horizon)?;
        let spec = self.archive.spec();
        let norm = self.archive.normalizer();
        let mut prev = norm.denormalize(z);
        let mut out = Vec::with_capacity(horizon);
        for (k, (s, f)) in traj.states.iter().zip(&traj.frames).enumerate().skip(1) {
            if traj.crashed && k + 1 == traj.states.len() && f.d_e.abs() > self.crash_d_e {
                break;
            }
            let mut o = spec.observe(s, f);
            for (j, d) in spec.dims.iter().enumerate() {
                if *d == ObsDim::HeadingError {
                    o[j] = prev[j] + wrap_angle(o[j] - prev[j]);
                }
            }
            out.push(norm.normalize(&o));
            prev = o;
        }
        Ok(out)
    }
}

/// `controller,escapes,total,rate`.
pub fn rates_csv(rates: &[UnsafeRate]) -> String {
    let mut s = String::from("controller,escapes,total,rate\n");
    for r in rates {
        s.push_str(&format!("{},{},{},{}\n", r.controller, r.escapes, r.total, crate::io::fmt_f64(r.rate())));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh1d() -> BarrierNet {
        BarrierNet::from_parts(vec![vec![1.0]], vec![0.0], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn stationary_and_zero_horizon() {
        let net = tanh1d();
        let grid = GridSpec::new(vec![-2.0], vec![2.0], vec![20]).unwrap();
        let starts = interior_starts(&net, &grid, 50, 3).unwrap();
        assert!(starts.iter().all(|z| z[0] > 0.0));
        let names = vec!["hold".to_string(), "drift".to_string()];
        let roll = |c: usize, _i: usize, z: &[f64], h: usize| -> Result<Vec<Vec<f64>>> {
            Ok((1..=h).map(|t| vec![z[0] - if c == 0 { 0.0 } else { 0.1 * t as f64 }]).collect())
        };
        let r = unsafe_rate_study(&net, &names, &starts, 100, roll).unwrap();
        assert_eq!(r[0].escapes, 0);
        assert_eq!(r[1].escapes, 50);
        let r = unsafe_rate_study(&net, &names, &starts, 0, roll).unwrap();
        assert!(r.iter().all(|x| x.rate() == 0.0));
    }

    #[test]
    fn no_interior_cells() {
        let mut net = tanh1d();
        net.b2 = -5.0;
        let grid = GridSpec::new(vec![-2.0], vec![2.0], vec![20]).unwrap();
        assert!(matches!(interior_starts(&net, &grid, 5, 0), Err(Error::NoInteriorCells)));
    }
}
