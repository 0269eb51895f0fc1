//! Time-windowed runtime monitor on an interior level set of the barrier.

use std::sync::Arc;

use rayon::prelude::*;

use crate::barrier::BarrierNet;
use crate::certify::{value_bounds, CertReport, GridSpec, Hyperbox};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Path};
use crate::obs::{Archive, FeedbackLaw, ObsDim};
use crate::vehicle::Simulator;

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    /// Level `c > 0` of the monitored set `B = c`.
    pub level: f64,
    /// Window length in simulator steps.
    pub horizon: usize,
    pub curvatures: Vec<f64>,
}

impl MonitorConfig {
    pub fn new(level: f64, horizon: usize, kappa_max: f64) -> Self {
        Self { level, horizon, curvatures: vec![-kappa_max, 0.0, kappa_max] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0) || self.curvatures.is_empty() {
            return Err(Error::Config("monitor: level must be positive and the curvature set nonempty".into()));
        }
        Ok(())
    }
}

/// Centers of grid cells whose value bounds straddle `c`.
pub fn extract_level_set(net: &BarrierNet, grid: &GridSpec, c: f64) -> Result<Vec<Vec<f64>>> {
    let bounds = value_bounds(net, grid)?;
    let out: Vec<Vec<f64>> = bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.straddles(c))
        .map(|(k, _)| grid.cell_box(k).center)
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyLevelSet(c));
    }
    Ok(out)
}

/// Closed-loop rollouts from an observation on a constant-curvature path.
pub trait WindowRollout: Sync {
    /// Observations after steps `1..=steps`. A shorter result means the
    /// rollout terminated (crashed) at the step after the last one returned.
    fn window(&self, z: &[f64], kappa: f64, steps: usize) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorFlag {
    pub state: Vec<f64>,
    pub flagged: bool,
    /// Earliest step at which some rollout entered an uncertified cell or terminated.
    pub first_hit: Option<usize>,
    /// Curvature of the rollout achieving `first_hit` (first in the set on ties).
    pub worst_kappa: Option<f64>,
}

fn first_hit(obs: &[Vec<f64>], steps: usize, cells: &[Hyperbox]) -> Option<usize> {
    if let Some(t) = obs.iter().position(|o| cells.iter().any(|c| c.contains(o))) {
        return Some(t + 1);
    }
    (obs.len() < steps).then_some(obs.len() + 1)
}

/// Flags each level-set state that can enter an uncertified cell within the window.
/// States whose rollout cannot be started are flagged at step 0.
pub fn reach_flags(sys: &impl WindowRollout, level_states: &[Vec<f64>], uncertified: &[Hyperbox], cfg: &MonitorConfig) -> Result<Vec<MonitorFlag>> {
    cfg.validate()?;
    Ok(level_states
        .par_iter()
        .map(|z| {
            let mut flag = MonitorFlag { state: z.clone(), flagged: false, first_hit: None, worst_kappa: None };
            if cfg.horizon == 0 || uncertified.is_empty() {
                return flag;
            }
            for &kappa in &cfg.curvatures {
                let hit = match sys.window(z, kappa, cfg.horizon) {
                    Ok(obs) => first_hit(&obs, cfg.horizon, uncertified),
                    Err(_) => Some(0),
                };
                if let Some(t) = hit {
                    if flag.first_hit.is_none_or(|b| t < b) {
                        flag.first_hit = Some(t);
                        flag.worst_kappa = Some(kappa);
                    }
                }
            }
            flag.flagged = flag.first_hit.is_some();
            flag
        })
        .collect())
}

/// Boxes of the violated cells of a report.
pub fn uncertified_boxes(report: &CertReport) -> Vec<Hyperbox> {
    report.violated_cells().map(|c| c.bbox.clone()).collect()
}

/// `state...,flagged,first_hit,worst_kappa`.
pub fn monitor_csv(flags: &[MonitorFlag]) -> String {
    let f = crate::io::fmt_f64;
    let n = flags.first().map_or(0, |m| m.state.len());
    let mut s: String = (0..n).map(|i| format!("z{i},")).collect();
    s.push_str("flagged,first_hit,worst_kappa\n");
    for m in flags {
        for x in &m.state {
            s.push_str(&f(*x));
            s.push(',');
        }
        s.push_str(&format!(
            "{},{},{}\n",
            u8::from(m.flagged),
            m.first_hit.map_or(String::new(), |t| t.to_string()),
            m.worst_kappa.map_or(String::new(), f)
        ));
    }
    s
}

/// Vehicle rollouts on synthetic constant-curvature paths.
///
/// The full state for an observation comes from the nearest archive entry's
/// unobserved quantities, placed at the start of the synthetic path.
pub struct CurvatureRollout<'a> {
    pub sim: &'a Simulator,
    pub law: &'a dyn FeedbackLaw,
    pub archive: &'a Archive,
    pub crash_d_e: f64,
    paths: Vec<(f64, Arc<Path>)>,
}

const START_S: f64 = 1.0;

impl<'a> CurvatureRollout<'a> {
    pub fn new(sim: &'a Simulator, law: &'a dyn FeedbackLaw, archive: &'a Archive, curvatures: &[f64], crash_d_e: f64) -> Result<Self> {
        let paths = curvatures
            .iter()
            .map(|&k| Ok((k, Arc::new(Path::constant_curvature(k, 5000.0)?))))
            .collect::<Result<_>>()?;
        Ok(Self { sim, law, archive, crash_d_e, paths })
    }

    fn sim_for(&self, kappa: f64) -> Result<Simulator> {
        let (_, p) = self
            .paths
            .iter()
            .find(|(k, _)| *k == kappa)
            .ok_or_else(|| Error::InvalidArgument(format!("curvature {kappa} not prepared")))?;
        Ok(self.sim.with_path(p.clone()))
    }
}

impl WindowRollout for CurvatureRollout<'_> {
    fn window(&self, z: &[f64], kappa: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
        let sim = self.sim_for(kappa)?;
        let norm = self.archive.normalizer();
        let spec = self.archive.spec();
        let o = norm.denormalize(z);
        let idx = self.archive.nearest(&o)?;
        let src = &self.archive.entries()[idx].1;
        let base = sim.state_at(START_S, 0.0, 0.0, src.v_x, src.v_y, src.r);
        let mut state = spec.apply(&sim, &base, &o);
        if !sim.can_reset_to(&state) {
            return Err(Error::ResetUnsupported);
        }
        let mut prev = o;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let frame = sim.frame_of(&state);
            let Ok(next) = sim.successor(&state, self.law.act(&state, &frame)) else { break };
            let nf = sim.frame_of(&next);
            let mut obs = spec.observe(&next, &nf);
            for (i, d) in spec.dims.iter().enumerate() {
                if *d == ObsDim::HeadingError {
                    obs[i] = prev[i] + wrap_angle(obs[i] - prev[i]);
                }
            }
            if nf.d_e.abs() > self.crash_d_e {
                break;
            }
            out.push(norm.normalize(&obs));
            prev = obs;
            state = next;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::CertifyConfig;

    struct Frozen;
    impl WindowRollout for Frozen {
        fn window(&self, z: &[f64], _k: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
            Ok(vec![z.to_vec(); steps])
        }
    }

    /// Moves `+v` per step along the first axis.
    struct Slide(f64);
    impl WindowRollout for Slide {
        fn window(&self, z: &[f64], kappa: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
            Ok((1..=steps).map(|t| vec![z[0] + (self.0 + kappa) * t as f64]).collect())
        }
    }

    struct Drift;
    impl crate::vehicle::ClosedLoop for Drift {
        fn dim(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            0.01
        }
        fn successor_near(&self, _a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![x[0] + 0.01])
        }
    }

    fn tanh1d() -> BarrierNet {
        BarrierNet::from_parts(vec![vec![1.0]], vec![0.0], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn level_set_location() {
        let g = GridSpec::new(vec![-2.0], vec![2.0], vec![400]).unwrap();
        let pts = extract_level_set(&tanh1d(), &g, 0.5).unwrap();
        assert!(!pts.is_empty());
        for p in &pts {
            assert!((p[0] - 0.5f64.atanh()).abs() <= 0.01);
        }
        assert!(matches!(extract_level_set(&tanh1d(), &g, 1.5), Err(Error::EmptyLevelSet(_))));
        let zero = extract_level_set(&tanh1d(), &g, 0.0).unwrap();
        let report = crate::certify::certify_grid(&tanh1d(), &Drift, &g, &CertifyConfig::default()).unwrap();
        let boundary: Vec<Vec<f64>> = report.boundary_cells().map(|c| c.bbox.center.clone()).collect();
        assert_eq!(zero, boundary);
    }

    #[test]
    fn trivial_windows() {
        let cells = vec![Hyperbox::new(vec![0.0], vec![0.5]).unwrap()];
        let states = vec![vec![1.0], vec![2.0]];
        let cfg = MonitorConfig::new(0.5, 0, 0.1);
        assert!(reach_flags(&Slide(-1.0), &states, &cells, &cfg).unwrap().iter().all(|f| !f.flagged));
        let cfg = MonitorConfig::new(0.5, 10, 0.1);
        assert!(reach_flags(&Slide(-1.0), &states, &[], &cfg).unwrap().iter().all(|f| !f.flagged));
        assert!(reach_flags(&Frozen, &states, &cells, &cfg).unwrap().iter().all(|f| !f.flagged));
    }

    #[test]
    fn first_hit_and_monotone_horizon() {
        let cells = vec![Hyperbox::new(vec![0.0], vec![0.25]).unwrap()];
        let states: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64 * 0.5]).collect();
        let mut prev: Vec<bool> = vec![false; states.len()];
        for t in [1, 3, 6, 12] {
            let flags = reach_flags(&Slide(-0.5), &states, &cells, &MonitorConfig::new(0.5, t, 0.1)).unwrap();
            for (i, f) in flags.iter().enumerate() {
                assert!(!prev[i] || f.flagged);
                prev[i] = f.flagged;
            }
        }
        let flags = reach_flags(&Slide(-0.5), &states[..1], &cells, &MonitorConfig::new(0.5, 5, 0.1)).unwrap();
        // kappa = +0.1 slows the slide to 0.4 per step: 0.5 - 0.4 = 0.1 inside at step 1,
        // kappa = -0.1 reaches -0.1 at step 1 too; the first curvature wins the tie.
        assert_eq!(flags[0].first_hit, Some(1));
        assert_eq!(flags[0].worst_kappa, Some(-0.1));
    }
}
