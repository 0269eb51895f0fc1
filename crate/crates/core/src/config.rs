//! Experiment configuration: flat `section.key = value` text; unknown keys are errors.

use sha2::{Digest, Sha256};

use crate::adversarial::LoopConfig;
use crate::barrier::BarrierLossConfig;
use crate::certify::{CertifyConfig, DynamicsBoundConfig};
use crate::controllers::{MpcConfig, PolicyTrainConfig};
use crate::error::{Error, Result};
use crate::obs::ObsDim;
use crate::sampling::CollectConfig;
use crate::vehicle::{Integrator, ModelKind, SimConfig};

/// Text (de)serialization of one config value.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn fmt_value(&self) -> String;
}

macro_rules! num_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|_| format!("expected a number, got {s:?}"))
            }
            fn fmt_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
num_value!(f64, usize, u64);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected true or false, got {s:?}")),
        }
    }
    fn fmt_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn fmt_value(&self) -> String {
        self.clone()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
    fn fmt_value(&self) -> String {
        self.iter().map(ConfigValue::fmt_value).collect::<Vec<_>>().join(", ")
    }
}

impl ConfigValue for ModelKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kinematic" => Ok(Self::Kinematic),
            "dynamic" => Ok(Self::Dynamic),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
    fn fmt_value(&self) -> String {
        match self {
            Self::Kinematic => "kinematic",
            Self::Dynamic => "dynamic",
        }
        .into()
    }
}

impl ConfigValue for Integrator {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            _ => Err(format!("unknown integrator {s:?}")),
        }
    }
    fn fmt_value(&self) -> String {
        match self {
            Self::Euler => "euler",
            Self::Rk4 => "rk4",
        }
        .into()
    }
}

impl ConfigValue for ObsDim {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn fmt_value(&self) -> String {
        self.name().into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConfig {
    /// `oval`, `mixed_loop`, or `file`.
    pub kind: String,
    pub straight: f64,
    pub radius: f64,
    /// Segment CSV used when `kind = file`.
    pub file: String,
    pub kappa_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeConfig {
    pub target: usize,
    pub m: usize,
    pub k: usize,
    pub box_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsConfig {
    pub dims: Vec<ObsDim>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Raw observation units.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSection {
    pub level: f64,
    pub horizon: usize,
    pub kappa_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n_starts: usize,
    pub horizon: usize,
    /// Track used for the study: `train` or `mixed_loop`.
    pub track: String,
    pub stanley_k: f64,
    pub stanley_kv: f64,
    pub mpc: MpcConfig,
    /// Trajectories written per controller by `compare`.
    pub n_plot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    /// `neural`, `stanley`, or `mpc`.
    pub controller: String,
    pub steps: usize,
    pub d_e: f64,
    pub theta_e: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: String,
    pub seed: u64,
    pub sim: SimConfig,
    pub track: TrackConfig,
    pub policy: PolicyTrainConfig,
    pub collect: CollectConfig,
    pub unsafe_: UnsafeConfig,
    pub obs: ObsConfig,
    pub barrier: BarrierLossConfig,
    pub barrier_hidden: usize,
    pub retrain_epochs: usize,
    pub grid: GridConfig,
    pub certify: CertifyConfig,
    pub max_rounds: usize,
    pub patience: usize,
    pub relabel_k: usize,
    pub monitor: MonitorSection,
    pub study: StudyConfig,
    pub simulate: SimulateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            name: "kinematic".into(),
            out_dir: "runs".into(),
            seed: 0,
            sim: SimConfig::default(),
            track: TrackConfig { kind: "oval".into(), straight: 200.0, radius: 100.0, file: String::new(), kappa_max: 0.02 },
            policy: PolicyTrainConfig::default(),
            collect: CollectConfig::default(),
            unsafe_: UnsafeConfig { target: 10000, m: 1000, k: 5, box_factor: 2.0 },
            obs: ObsConfig {
                dims: vec![ObsDim::DistanceError, ObsDim::HeadingError, ObsDim::SpeedX],
                center: vec![0.0, 0.0, 30.0],
                scale: vec![2.0, 0.5, 6.0],
            },
            barrier: BarrierLossConfig::default(),
            barrier_hidden: 256,
            retrain_epochs: 50,
            grid: GridConfig { lo: vec![-2.0, -0.5, 24.0], hi: vec![2.0, 0.5, 36.0], cells: vec![40, 40, 20] },
            certify: CertifyConfig { dynamics: DynamicsBoundConfig::default(), lie_margin: 0.0, boundary_dilation: 0 },
            max_rounds: 60,
            patience: 5,
            relabel_k: 5,
            monitor: MonitorSection { level: 0.2, horizon: 50, kappa_max: 0.02 },
            study: StudyConfig {
                n_starts: 200,
                horizon: 500,
                track: "mixed_loop".into(),
                stanley_k: 1.0,
                stanley_kv: 1.0,
                mpc: MpcConfig::default(),
                n_plot: 5,
            },
            simulate: SimulateConfig { controller: "neural".into(), steps: 500, d_e: 0.5, theta_e: 0.0, s: 0.0 },
        };
        cfg.sync();
        cfg
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        impl ExperimentConfig {
            /// Every recognized key, in canonical order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => self.$($field).+ = ConfigValue::parse_value(value)?,)*
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            }

            /// Canonical text form listing every key; parses back to `self`.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(
                    s.push_str($key);
                    s.push_str(" = ");
                    s.push_str(&self.$($field).+.fmt_value());
                    s.push('\n');
                )*
                s
            }
        }
    };
}

config_keys! {
    "run.name" => name;
    "run.out_dir" => out_dir;
    "run.seed" => seed;
    "vehicle.model" => sim.model;
    "vehicle.dt" => sim.dt;
    "vehicle.integrator" => sim.integrator;
    "vehicle.v_min" => sim.v_min;
    "vehicle.v_max" => sim.v_max;
    "vehicle.wheelbase" => sim.params.wheelbase;
    "vehicle.l_f" => sim.params.l_f;
    "vehicle.l_r" => sim.params.l_r;
    "vehicle.mass" => sim.params.mass;
    "vehicle.yaw_inertia" => sim.params.yaw_inertia;
    "vehicle.c_f" => sim.params.c_f;
    "vehicle.c_r" => sim.params.c_r;
    "vehicle.a_min" => sim.limits.a_min;
    "vehicle.a_max" => sim.limits.a_max;
    "vehicle.delta_max" => sim.limits.delta_max;
    "vehicle.arbitrary_reset" => sim.capabilities.arbitrary_reset;
    "vehicle.init_d_e_max" => sim.initial_set.d_e_max;
    "vehicle.init_theta_e_max" => sim.initial_set.theta_e_max;
    "track.kind" => track.kind;
    "track.straight" => track.straight;
    "track.radius" => track.radius;
    "track.file" => track.file;
    "track.kappa_max" => track.kappa_max;
    "policy.population" => policy.population;
    "policy.elites" => policy.elites;
    "policy.generations" => policy.generations;
    "policy.horizon" => policy.horizon;
    "policy.episodes" => policy.episodes;
    "policy.hidden" => policy.hidden;
    "policy.sigma_init" => policy.sigma_init;
    "policy.sigma_floor" => policy.sigma_floor;
    "policy.v_target" => policy.v_target;
    "policy.init_d_e" => policy.init.d_e;
    "policy.init_theta_e" => policy.init.theta_e;
    "policy.init_v" => policy.init.v;
    "policy.input_scale" => policy.input_scale;
    "policy.boundary_reset_fraction" => policy.boundary_reset_fraction;
    "policy.w_progress" => policy.reward.progress;
    "policy.w_d_e" => policy.reward.d_e;
    "policy.w_theta_e" => policy.reward.theta_e;
    "policy.w_speed" => policy.reward.speed;
    "policy.crash_penalty" => policy.reward.crash_penalty;
    "policy.crash_d_e" => policy.reward.crash_d_e;
    "collect.n_traj" => collect.n_traj;
    "collect.steps" => collect.steps;
    "collect.init_d_e" => collect.init.d_e;
    "collect.init_theta_e" => collect.init.theta_e;
    "collect.init_v" => collect.init.v;
    "collect.crash_d_e" => collect.crash_d_e;
    "collect.max_crash_rate" => collect.max_crash_rate;
    "unsafe.target" => unsafe_.target;
    "unsafe.m" => unsafe_.m;
    "unsafe.k" => unsafe_.k;
    "unsafe.box_factor" => unsafe_.box_factor;
    "obs.dims" => obs.dims;
    "obs.center" => obs.center;
    "obs.scale" => obs.scale;
    "barrier.hidden" => barrier_hidden;
    "barrier.w_s" => barrier.w_s;
    "barrier.w_u" => barrier.w_u;
    "barrier.w_l" => barrier.w_l;
    "barrier.gamma" => barrier.gamma;
    "barrier.margin" => barrier.margin;
    "barrier.lie_margin" => barrier.lie_margin;
    "barrier.lr" => barrier.lr;
    "barrier.momentum" => barrier.momentum;
    "barrier.epochs" => barrier.epochs;
    "barrier.retrain_epochs" => retrain_epochs;
    "barrier.batch" => barrier.batch;
    "grid.lo" => grid.lo;
    "grid.hi" => grid.hi;
    "grid.cells" => grid.cells;
    "certify.lipschitz" => certify.dynamics.lipschitz;
    "certify.jacobian_bloat" => certify.dynamics.jacobian_bloat;
    "certify.probe_fraction" => certify.dynamics.probe_fraction;
    "certify.lie_margin" => certify.lie_margin;
    "certify.boundary_dilation" => certify.boundary_dilation;
    "loop.max_rounds" => max_rounds;
    "loop.patience" => patience;
    "loop.k" => relabel_k;
    "monitor.level" => monitor.level;
    "monitor.horizon" => monitor.horizon;
    "monitor.kappa_max" => monitor.kappa_max;
    "study.n_starts" => study.n_starts;
    "study.horizon" => study.horizon;
    "study.track" => study.track;
    "study.stanley_k" => study.stanley_k;
    "study.stanley_kv" => study.stanley_kv;
    "study.n_plot" => study.n_plot;
    "mpc.horizon" => study.mpc.horizon;
    "mpc.samples" => study.mpc.samples;
    "mpc.hold" => study.mpc.hold;
    "mpc.w_theta" => study.mpc.w_theta;
    "mpc.w_v" => study.mpc.w_v;
    "mpc.include_zero" => study.mpc.include_zero;
    "simulate.controller" => simulate.controller;
    "simulate.steps" => simulate.steps;
    "simulate.d_e" => simulate.d_e;
    "simulate.theta_e" => simulate.theta_e;
    "simulate.s" => simulate.s;
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { file: file.to_string(), msg: format!("line {}: {msg}", n + 1) };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Propagates shared values into the sub-configs that carry copies.
    fn sync(&mut self) {
        self.collect.v_target = self.policy.v_target;
        self.study.mpc.v_target = self.policy.v_target;
        self.policy.seed = self.seed;
        self.barrier.seed = self.seed;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.params.validate()?;
        self.policy.validate()?;
        self.barrier.validate()?;
        let n = self.obs.dims.len();
        let bad = |m: &str| Err(Error::Config(m.into()));
        if n == 0 || self.obs.center.len() != n || self.obs.scale.len() != n {
            return bad("obs: dims, center and scale must have equal nonzero length");
        }
        if self.grid.lo.len() != n || self.grid.hi.len() != n || self.grid.cells.len() != n {
            return bad("grid: lo, hi and cells must match obs.dims");
        }
        if self.unsafe_.k % 2 == 0 || self.relabel_k % 2 == 0 {
            return bad("k must be odd");
        }
        if !["oval", "mixed_loop", "file"].contains(&self.track.kind.as_str()) {
            return bad("track.kind must be oval, mixed_loop or file");
        }
        if !["train", "mixed_loop"].contains(&self.study.track.as_str()) {
            return bad("study.track must be train or mixed_loop");
        }
        if !["neural", "stanley", "mpc"].contains(&self.simulate.controller.as_str()) {
            return bad("simulate.controller must be neural, stanley or mpc");
        }
        if self.max_rounds == 0 || self.patience == 0 {
            return bad("loop: max_rounds and patience must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            max_rounds: self.max_rounds,
            patience: self.patience,
            k: self.relabel_k,
            hidden: self.barrier_hidden,
            initial: self.barrier,
            retrain: BarrierLossConfig { epochs: self.retrain_epochs, ..self.barrier },
            certify: self.certify,
        }
    }
}
