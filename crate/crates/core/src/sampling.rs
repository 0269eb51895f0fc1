//! Labeled dataset construction: safe rollouts, kNN-labeled unsafe samples,
//! and full-state synthesis for partial observations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{rollout, Controller, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::geometry::PathFrame;
use crate::obs::{Archive, FeedbackLaw, Normalizer, ObsSpec};
use crate::seeds::derive_seed;
use crate::vehicle::{Action, Simulator, VehicleState};

/// Spread of randomized initial states around the path center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpread {
    pub d_e: f64,
    pub theta_e: f64,
    pub v: f64,
}

impl Default for InitSpread {
    fn default() -> Self {
        Self { d_e: 1.0, theta_e: 0.2, v: 3.0 }
    }
}

impl InitSpread {
    /// Uniform draw: arc length over the whole track, errors and speed in the spread box.
    /// Non-resettable simulators are restricted to their permitted initial set.
    pub fn sample<R: Rng>(&self, sim: &Simulator, v_target: f64, rng: &mut R) -> VehicleState {
        let cfg = sim.config();
        let (mut dm, mut tm) = (self.d_e, self.theta_e);
        if !cfg.capabilities.arbitrary_reset {
            dm = dm.min(cfg.initial_set.d_e_max);
            tm = tm.min(cfg.initial_set.theta_e_max);
        }
        let s = rng.random::<f64>() * sim.path().length();
        let d = sym(rng, dm);
        let th = sym(rng, tm);
        let v = (v_target + sym(rng, self.v)).max(cfg.v_min);
        sim.state_at(s, d, th, v, 0.0, 0.0)
    }
}

fn sym<R: Rng>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub s_next: Vec<f64>,
    pub dt: f64,
}

/// Raw (unnormalized) observations labeled safe or unsafe, plus rollout
/// transitions and the archive of full states behind safe observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub safe: Vec<Vec<f64>>,
    pub unsafe_: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
    pub archive: Vec<(Vec<f64>, VehicleState)>,
}

impl LabeledDataset {
    pub fn dim(&self) -> Option<usize> {
        self.safe.first().or(self.unsafe_.first()).map(Vec::len)
    }

    /// Adds a labeled point unless the same point already carries the other label.
    /// Returns whether the point was added.
    pub fn push_labeled(&mut self, point: Vec<f64>, safe: bool) -> bool {
        let other = if safe { &self.unsafe_ } else { &self.safe };
        if other.iter().any(|p| *p == point) {
            return false;
        }
        if safe {
            self.safe.push(point);
        } else {
            self.unsafe_.push(point);
        }
        true
    }
}

/// Safe observations gathered from closed-loop rollouts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SafeCollection {
    pub safe: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
    pub archive: Vec<(Vec<f64>, VehicleState)>,
    pub crashed: usize,
    pub total: usize,
}

struct LawController<'a>(&'a dyn FeedbackLaw);

impl Controller for LawController<'_> {
    fn name(&self) -> &str {
        "law"
    }

    fn act(&mut self, _sim: &Simulator, state: &VehicleState, frame: &PathFrame) -> Result<Action> {
        Ok(self.0.act(state, frame))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectConfig {
    pub n_traj: usize,
    /// Steps per rollout; each surviving rollout contributes `steps + 1` states.
    pub steps: usize,
    pub init: InitSpread,
    pub v_target: f64,
    pub crash_d_e: f64,
    /// Crash rate at or above which the policy is rejected.
    pub max_crash_rate: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { n_traj: 100, steps: 99, init: InitSpread::default(), v_target: 30.0, crash_d_e: 3.0, max_crash_rate: 0.05 }
    }
}

/// Rolls out `law` from randomized initial states and records every visited
/// state of the surviving rollouts. Deterministic given `seed`.
pub fn collect_safe(sim: &Simulator, law: &dyn FeedbackLaw, spec: &ObsSpec, cfg: &CollectConfig, seed: u64) -> Result<SafeCollection> {
    let mut out = SafeCollection { total: cfg.n_traj, ..Default::default() };
    let mut sim = sim.clone();
    let mut ctrl = LawController(law);
    for i in 0..cfg.n_traj {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let init = cfg.init.sample(&sim, cfg.v_target, &mut rng);
        let traj = rollout(&mut sim, &mut ctrl, init, cfg.steps, cfg.crash_d_e)?;
        if traj.crashed {
            out.crashed += 1;
            continue;
        }
        append_trajectory(&mut out, &traj, spec, sim.dt());
    }
    if cfg.n_traj > 0 && out.crashed as f64 >= cfg.max_crash_rate * cfg.n_traj as f64 {
        return Err(Error::PolicyUnsafe { crashed: out.crashed, total: cfg.n_traj });
    }
    Ok(out)
}

fn append_trajectory(out: &mut SafeCollection, traj: &Trajectory, spec: &ObsSpec, dt: f64) {
    let obs: Vec<Vec<f64>> = traj.states.iter().zip(&traj.frames).map(|(s, f)| spec.observe(s, f)).collect();
    for w in obs.windows(2) {
        out.transitions.push(Transition { s: w[0].clone(), s_next: w[1].clone(), dt });
    }
    for (o, s) in obs.iter().zip(&traj.states) {
        out.archive.push((o.clone(), *s));
    }
    out.safe.extend(obs);
}

/// Axis-aligned box with the same center as the data and `factor` times its extent.
pub fn sampling_box(points: &[Vec<f64>], factor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = points.first().ok_or(Error::EmptyDataset("safe set"))?;
    let n = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        check_dim(n, p.len())?;
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    for i in 0..n {
        let c = 0.5 * (lo[i] + hi[i]);
        let half = (0.5 * factor * (hi[i] - lo[i])).max(1e-6);
        lo[i] = c - half;
        hi[i] = c + half;
    }
    Ok((lo, hi))
}

/// Counts safe points among the `k` nearest neighbors of `q`.
///
/// `points` yields `(is_safe, normalized point)`; `skip` excludes one index
/// (the query itself). Equal distances are broken by enumeration order.
pub fn knn_safe_count<'a>(points: impl Iterator<Item = (bool, &'a [f64])>, q: &[f64], k: usize, skip: Option<usize>) -> usize {
    let mut best: Vec<(f64, usize, bool)> = Vec::with_capacity(k + 1);
    for (idx, (safe, p)) in points.enumerate() {
        if Some(idx) == skip {
            continue;
        }
        let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|(bd, _, _)| *bd <= d);
        best.insert(pos, (d, idx, safe));
        best.truncate(k);
    }
    best.iter().filter(|b| b.2).count()
}

/// One round of kNN unsafe labeling.
///
/// Draws `m` uniform candidates in `[lo, hi]`; a candidate is discarded when
/// more than `k/2` of its `k` nearest neighbors in `X_s ∪ X_u ∪ X_c`
/// (normalized Euclidean distance) are safe. Candidates of the current round
/// stay in `X_c` while others are judged and count as non-safe. Returns the
/// surviving candidates.
pub fn label_unsafe_knn<R: Rng>(
    safe: &[Vec<f64>],
    unsafe_: &[Vec<f64>],
    m: usize,
    k: usize,
    bounds: (&[f64], &[f64]),
    norm: &Normalizer,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if safe.is_empty() {
        return Err(Error::EmptyDataset("safe set"));
    }
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("k must be odd, got {k}")));
    }
    let (lo, hi) = bounds;
    let n = lo.len();
    check_dim(n, hi.len())?;
    check_dim(n, norm.dim())?;
    let candidates: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|i| if hi[i] > lo[i] { rng.random_range(lo[i]..hi[i]) } else { lo[i] }).collect())
        .collect();
    let labeled: Vec<(bool, Vec<f64>)> = safe
        .iter()
        .map(|p| (true, norm.normalize(p)))
        .chain(unsafe_.iter().map(|p| (false, norm.normalize(p))))
        .chain(candidates.iter().map(|p| (false, norm.normalize(p))))
        .collect();
    let offset = safe.len() + unsafe_.len();
    let keep: Vec<bool> = (0..m)
        .into_par_iter()
        .map(|c| {
            let q = &labeled[offset + c].1;
            let n_safe = knn_safe_count(labeled.iter().map(|(s, p)| (*s, p.as_slice())), q, k, Some(offset + c));
            2 * n_safe <= k
        })
        .collect();
    Ok(candidates.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect())
}

/// Repeats [`label_unsafe_knn`] until `X_u` holds `target` points.
pub fn fill_unsafe(
    safe: &[Vec<f64>],
    mut unsafe_: Vec<Vec<f64>>,
    target: usize,
    m: usize,
    k: usize,
    bounds: (&[f64], &[f64]),
    norm: &Normalizer,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut round = 0u64;
    let mut stalled = 0;
    while unsafe_.len() < target {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, round));
        let mut fresh = label_unsafe_knn(safe, &unsafe_, m, k, bounds, norm, &mut rng)?;
        stalled = if fresh.is_empty() { stalled + 1 } else { 0 };
        if stalled >= 20 {
            return Err(Error::InvalidArgument("unsafe sampling stalled: no candidates survive".into()));
        }
        fresh.truncate(target - unsafe_.len());
        unsafe_.extend(fresh);
        round += 1;
    }
    Ok(unsafe_)
}

/// Completes observation `o_b` into a full state: takes the archive entry
/// with the nearest observation and overwrites its observed quantities.
pub fn synthesize_full_state(sim: &Simulator, o_b: &[f64], archive: &Archive) -> Result<VehicleState> {
    let idx = archive.nearest(o_b)?;
    Ok(archive.synthesize_from(sim, idx, o_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Path;
    use crate::obs::ObsDim;
    use crate::vehicle::{ModelKind, SimConfig};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn id2() -> Normalizer {
        Normalizer::identity(2)
    }

    /// Brute force: full sort of all distances.
    fn oracle_safe_count(points: &[(bool, Vec<f64>)], q: &[f64], k: usize, skip: usize) -> usize {
        let mut d: Vec<(f64, usize, bool)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(i, (s, p))| (p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum(), i, *s))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.iter().take(k).filter(|x| x.2).count()
    }

    #[test]
    fn far_candidate_is_kept() {
        let safe = vec![vec![0.0, 0.0], vec![0.1, 0.0]];
        let unsafe_ = vec![vec![5.0, 4.0], vec![4.0, 5.0]];
        let pts = vec![
            (true, safe[0].clone()),
            (true, safe[1].clone()),
            (false, unsafe_[0].clone()),
            (false, unsafe_[1].clone()),
            (false, vec![5.0, 5.0]),
        ];
        assert_eq!(oracle_safe_count(&pts, &[5.0, 5.0], 3, 4), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let kept = label_unsafe_knn(&safe, &unsafe_, 1, 3, (&[5.0, 5.0], &[5.0, 5.0]), &id2(), &mut rng).unwrap();
        assert_eq!(kept, vec![vec![5.0, 5.0]]);
    }

    #[test]
    fn candidate_among_safe_points_is_discarded() {
        let safe = vec![vec![0.0, 0.0], vec![0.1, 0.0]];
        let pts = vec![(true, safe[0].clone()), (true, safe[1].clone()), (false, vec![0.05, 0.0])];
        assert_eq!(oracle_safe_count(&pts, &[0.05, 0.0], 3, 2), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let kept = label_unsafe_knn(&safe, &[], 1, 3, (&[0.05, 0.0], &[0.05, 0.0]), &id2(), &mut rng).unwrap();
        assert!(kept.is_empty());
    }

    #[test]
    fn zero_candidates_and_errors() {
        let safe = vec![vec![0.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(label_unsafe_knn(&safe, &[], 0, 3, (&[0.0, 0.0], &[1.0, 1.0]), &id2(), &mut rng).unwrap().is_empty());
        assert!(label_unsafe_knn(&[], &[], 5, 3, (&[0.0, 0.0], &[1.0, 1.0]), &id2(), &mut rng).is_err());
        assert!(label_unsafe_knn(&safe, &[], 5, 4, (&[0.0, 0.0], &[1.0, 1.0]), &id2(), &mut rng).is_err());
    }

    #[test]
    fn knn_replay_against_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let safe: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let unsafe_: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let lo = [-3.0, -3.0];
        let hi = [3.0, 3.0];
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let kept = label_unsafe_knn(&safe, &unsafe_, 300, 5, (&lo, &hi), &id2(), &mut rng_a).unwrap();
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let cands: Vec<Vec<f64>> = (0..300).map(|_| (0..2).map(|i| rng_b.random_range(lo[i]..hi[i])).collect()).collect();
        let all: Vec<(bool, Vec<f64>)> = safe
            .iter()
            .map(|p| (true, p.clone()))
            .chain(unsafe_.iter().map(|p| (false, p.clone())))
            .chain(cands.iter().map(|p| (false, p.clone())))
            .collect();
        let expected: Vec<Vec<f64>> = cands
            .iter()
            .enumerate()
            .filter(|(i, c)| 2 * oracle_safe_count(&all, c, 5, 250 + i) <= 5)
            .map(|(_, c)| c.clone())
            .collect();
        assert_eq!(kept, expected);
        assert!(!kept.is_empty() && kept.len() < 300);
    }

    #[test]
    fn sampling_box_doubles_extent() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let (lo, hi) = sampling_box(&pts, 2.0).unwrap();
        assert_eq!(lo, vec![-1.0, 0.0]);
        assert_eq!(hi, vec![3.0, 4.0]);
    }

    fn dyn_sim() -> Simulator {
        let path = Arc::new(Path::oval(200.0, 100.0).unwrap());
        Simulator::new(SimConfig { model: ModelKind::Dynamic, ..SimConfig::default() }, path).unwrap()
    }

    #[test]
    fn synthesis_keeps_hidden_state_and_sets_observed() {
        let sim = dyn_sim();
        let spec = ObsSpec::new(vec![ObsDim::DistanceError, ObsDim::HeadingError]);
        let a = sim.state_at(30.0, 0.2, 0.05, 10.0, 0.3, 0.1);
        let b = sim.state_at(400.0, -0.5, -0.1, 11.0, -0.2, 0.0);
        let obs = |s: &VehicleState| spec.observe(s, &sim.frame_of(s));
        let archive = Archive::new(spec.clone(), Normalizer::identity(2), vec![(obs(&a), a), (obs(&b), b)]).unwrap();

        let exact = synthesize_full_state(&sim, &obs(&a), &archive).unwrap();
        assert_abs_diff_eq!(exact.x, a.x, epsilon = 1e-9);
        assert_abs_diff_eq!(exact.y, a.y, epsilon = 1e-9);
        assert_eq!((exact.v_x, exact.v_y, exact.r), (a.v_x, a.v_y, a.r));

        // midway between the two, nearer to a by 1e-3 in d_e
        let mid = [(0.2 - 0.5) / 2.0 + 1e-3, (0.05 - 0.1) / 2.0];
        let s = synthesize_full_state(&sim, &mid, &archive).unwrap();
        assert_eq!((s.v_x, s.v_y, s.r), (a.v_x, a.v_y, a.r));
        let f = sim.frame_of(&s);
        assert_abs_diff_eq!(f.d_e, mid[0], epsilon = 1e-9);
        assert_abs_diff_eq!(f.theta_e, mid[1], epsilon = 1e-9);
        assert_abs_diff_eq!(f.s, 30.0, epsilon = 1e-9);
    }

    #[test]
    fn single_entry_archive() {
        let sim = dyn_sim();
        let spec = ObsSpec::new(vec![ObsDim::DistanceError, ObsDim::HeadingError, ObsDim::SpeedX]);
        let a = sim.state_at(100.0, 0.0, 0.0, 10.0, 0.1, 0.02);
        let archive = Archive::new(spec, Normalizer::identity(3), vec![(vec![0.0, 0.0, 10.0], a)]).unwrap();
        let s = synthesize_full_state(&sim, &[1.0, -0.2, 12.0], &archive).unwrap();
        let f = sim.frame_of(&s);
        assert_abs_diff_eq!(f.d_e, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.theta_e, -0.2, epsilon = 1e-9);
        assert_eq!((s.v_x, s.v_y, s.r), (12.0, 0.1, 0.02));
        let empty = Archive::new(ObsSpec::new(vec![ObsDim::DistanceError]), Normalizer::identity(1), vec![]).unwrap();
        assert!(synthesize_full_state(&sim, &[0.0], &empty).is_err());
    }
}
