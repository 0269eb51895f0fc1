//! Observation vectors, normalization, and closed loops over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{wrap_angle, PathFrame};
use crate::vehicle::{ClosedLoop, ModelKind, Simulator, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObsDim {
    #[serde(rename = "d_e")]
    DistanceError,
    #[serde(rename = "theta_e")]
    HeadingError,
    #[serde(rename = "v_x")]
    SpeedX,
    #[serde(rename = "v_y")]
    SpeedY,
    #[serde(rename = "r")]
    YawRate,
}

impl ObsDim {
    pub fn name(&self) -> &'static str {
        match self {
            ObsDim::DistanceError => "d_e",
            ObsDim::HeadingError => "theta_e",
            ObsDim::SpeedX => "v_x",
            ObsDim::SpeedY => "v_y",
            ObsDim::YawRate => "r",
        }
    }

    pub fn value(&self, state: &VehicleState, frame: &PathFrame) -> f64 {
        match self {
            ObsDim::DistanceError => frame.d_e,
            ObsDim::HeadingError => frame.theta_e,
            ObsDim::SpeedX => state.v_x,
            ObsDim::SpeedY => state.v_y,
            ObsDim::YawRate => state.r,
        }
    }
}

impl fmt::Display for ObsDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObsDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "d_e" => ObsDim::DistanceError,
            "theta_e" => ObsDim::HeadingError,
            "v_x" => ObsDim::SpeedX,
            "v_y" => ObsDim::SpeedY,
            "r" => ObsDim::YawRate,
            other => return Err(Error::Config(format!("unknown observation dimension `{other}`"))),
        })
    }
}

/// Which state quantities a barrier observes, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsSpec {
    pub dims: Vec<ObsDim>,
}

impl ObsSpec {
    pub fn new(dims: Vec<ObsDim>) -> Self {
        Self { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn observe(&self, state: &VehicleState, frame: &PathFrame) -> Vec<f64> {
        self.dims.iter().map(|d| d.value(state, frame)).collect()
    }

    pub fn index_of(&self, dim: ObsDim) -> Option<usize> {
        self.dims.iter().position(|d| *d == dim)
    }

    /// Overwrites the observed quantities of `base` with `obs`, keeping the
    /// base state's arc-length position and any unobserved quantity.
    pub fn apply(&self, sim: &Simulator, base: &VehicleState, obs: &[f64]) -> VehicleState {
        let frame = sim.frame_of(base);
        let mut d_e = frame.d_e;
        let mut theta_e = frame.theta_e;
        let (mut v_x, mut v_y, mut r) = (base.v_x, base.v_y, base.r);
        for (dim, &v) in self.dims.iter().zip(obs) {
            match dim {
                ObsDim::DistanceError => d_e = v,
                ObsDim::HeadingError => theta_e = v,
                ObsDim::SpeedX => v_x = v,
                ObsDim::SpeedY => v_y = v,
                ObsDim::YawRate => r = v,
            }
        }
        sim.state_at(frame.s, d_e, theta_e, v_x, v_y, r)
    }
}

/// Affine per-dimension scaling `z = (o - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_dim(center.len(), scale.len())?;
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("normalization scales must be positive".into()));
        }
        Ok(Self { center, scale })
    }

    pub fn identity(n: usize) -> Self {
        Self { center: vec![0.0; n], scale: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn normalize(&self, o: &[f64]) -> Vec<f64> {
        o.iter().zip(&self.center).zip(&self.scale).map(|((o, c), s)| (o - c) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.center).zip(&self.scale).map(|((z, c), s)| z * s + c).collect()
    }
}

/// Observation vector fed to policies: `(d_e, theta_e, v_x, kappa[, v_y, r])`.
pub fn policy_observation(model: ModelKind, state: &VehicleState, frame: &PathFrame) -> Vec<f64> {
    match model {
        ModelKind::Kinematic => vec![frame.d_e, frame.theta_e, state.v_x, frame.kappa],
        ModelKind::Dynamic => vec![frame.d_e, frame.theta_e, state.v_x, frame.kappa, state.v_y, state.r],
    }
}

pub fn policy_obs_dim(model: ModelKind) -> usize {
    match model {
        ModelKind::Kinematic => 4,
        ModelKind::Dynamic => 6,
    }
}

/// A stateless feedback law `u = g(x)`.
pub trait FeedbackLaw: Sync {
    fn act(&self, state: &VehicleState, frame: &PathFrame) -> crate::vehicle::Action;
}

/// Archived `(observation, full state)` pairs with normalized lookup.
#[derive(Debug, Clone)]
pub struct Archive {
    spec: ObsSpec,
    normalizer: Normalizer,
    entries: Vec<(Vec<f64>, VehicleState)>,
    normalized: Vec<Vec<f64>>,
}

impl Archive {
    pub fn new(spec: ObsSpec, normalizer: Normalizer, entries: Vec<(Vec<f64>, VehicleState)>) -> Result<Self> {
        check_dim(spec.dim(), normalizer.dim())?;
        for (o, _) in &entries {
            check_dim(spec.dim(), o.len())?;
        }
        let normalized = entries.iter().map(|(o, _)| normalizer.normalize(o)).collect();
        Ok(Self { spec, normalizer, entries, normalized })
    }

    pub fn spec(&self) -> &ObsSpec {
        &self.spec
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn entries(&self) -> &[(Vec<f64>, VehicleState)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the entry nearest to the raw observation `o` in normalized L2.
    /// Ties go to the earliest entry.
    pub fn nearest(&self, o: &[f64]) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset("archive"));
        }
        check_dim(self.spec.dim(), o.len())?;
        let z = self.normalizer.normalize(o);
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.normalized.iter().enumerate() {
            let d: f64 = e.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    /// Full state completing observation `o` from archive entry `idx`.
    pub fn synthesize_from(&self, sim: &Simulator, idx: usize, o: &[f64]) -> VehicleState {
        self.spec.apply(sim, &self.entries[idx].1, o)
    }
}

/// Closed loop seen through normalized barrier observations.
///
/// Each point is completed into a full state from the archive entry nearest
/// to the anchor, simulated for one step under `law`, and observed again.
pub struct ObservedLoop<'a> {
    pub sim: &'a Simulator,
    pub law: &'a dyn FeedbackLaw,
    pub archive: &'a Archive,
}

impl<'a> ObservedLoop<'a> {
    pub fn new(sim: &'a Simulator, law: &'a dyn FeedbackLaw, archive: &'a Archive) -> Self {
        Self { sim, law, archive }
    }

    /// Full state for normalized observation `z`, completed around `anchor`.
    pub fn full_state(&self, anchor: &[f64], z: &[f64]) -> Result<VehicleState> {
        let norm = self.archive.normalizer();
        let idx = self.archive.nearest(&norm.denormalize(anchor))?;
        let state = self.archive.synthesize_from(self.sim, idx, &norm.denormalize(z));
        if !self.sim.can_reset_to(&state) {
            return Err(Error::ResetUnsupported);
        }
        Ok(state)
    }

    /// Successor of a full state, returned as a normalized observation.
    /// Heading errors are unwrapped relative to `o` so differences stay small.
    pub fn observe_step(&self, state: &VehicleState, o: &[f64]) -> Result<Vec<f64>> {
        let frame = self.sim.frame_of(state);
        let u = self.law.act(state, &frame);
        let next = self.sim.successor(state, u)?;
        let spec = self.archive.spec();
        let mut o_next = spec.observe(&next, &self.sim.frame_of(&next));
        for (i, d) in spec.dims.iter().enumerate() {
            if *d == ObsDim::HeadingError {
                o_next[i] = o[i] + wrap_angle(o_next[i] - o[i]);
            }
        }
        Ok(self.archive.normalizer().normalize(&o_next))
    }
}

impl ClosedLoop for ObservedLoop<'_> {
    fn dim(&self) -> usize {
        self.archive.spec().dim()
    }

    fn dt(&self) -> f64 {
        self.sim.dt()
    }

    fn successor_near(&self, anchor: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let state = self.full_state(anchor, z)?;
        let o = self.archive.normalizer().denormalize(z);
        self.observe_step(&state, &o)
    }
}

/// Closed loop over the six full-state coordinates `(x, y, theta, v_x, v_y, r)`.
pub struct FullStateLoop<'a> {
    pub sim: &'a Simulator,
    pub law: &'a dyn FeedbackLaw,
}

impl ClosedLoop for FullStateLoop<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn dt(&self) -> f64 {
        self.sim.dt()
    }

    fn is_angle(&self, i: usize) -> bool {
        i == 2
    }

    fn successor_near(&self, _anchor: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let state = VehicleState::from_slice(x);
        if !self.sim.can_reset_to(&state) {
            return Err(Error::ResetUnsupported);
        }
        let frame = self.sim.frame_of(&state);
        let next = self.sim.successor(&state, self.law.act(&state, &frame))?;
        Ok(next.to_array().to_vec())
    }
}
