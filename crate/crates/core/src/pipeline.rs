//! Experiment stages assembled from an [`ExperimentConfig`].

use std::sync::Arc;

use log::info;

use crate::adversarial::{run_loop, LoopOutcome, RoundView};
use crate::barrier::{train_barrier, BarrierData, BarrierFile, BarrierNet, TrainOutcome};
use crate::certify::{certify_grid, CertReport, GridSpec};
use crate::config::ExperimentConfig;
use crate::controllers::{train_policy, Controller, GenerationStats, MlpPolicy, ShootingMpc, Stanley, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{build_track, parse_track_csv, Path};
use crate::monitor::{extract_level_set, reach_flags, uncertified_boxes, CurvatureRollout, MonitorConfig, MonitorFlag};
use crate::obs::{Archive, FeedbackLaw, Normalizer, ObsSpec, ObservedLoop};
use crate::sampling::{collect_safe, fill_unsafe, sampling_box, LabeledDataset, Transition};
use crate::seeds::named_seed;
use crate::study::{interior_starts, unsafe_rate_study, ControllerFactory, UnsafeRate, VehicleStudy};
use crate::vehicle::Simulator;

/// Simulator, observation space, and certification grid of one experiment.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: ExperimentConfig,
    pub sim: Simulator,
    pub spec: ObsSpec,
    pub norm: Normalizer,
    /// Grid in normalized observation coordinates.
    pub grid: GridSpec,
}

pub fn training_track(cfg: &ExperimentConfig) -> Result<Path> {
    let t = &cfg.track;
    match t.kind.as_str() {
        "oval" => Path::oval(t.straight, t.radius),
        "mixed_loop" => Path::mixed_loop(),
        "file" => build_track(&parse_track_csv(&crate::io::read_text(std::path::Path::new(&t.file))?)?, t.kappa_max),
        other => Err(Error::Config(format!("unknown track kind {other:?}"))),
    }
}

impl Env {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let path = Arc::new(training_track(&cfg)?);
        let sim = Simulator::new(cfg.sim.clone(), path)?;
        let spec = ObsSpec::new(cfg.obs.dims.clone());
        let norm = Normalizer::new(cfg.obs.center.clone(), cfg.obs.scale.clone())?;
        let grid = GridSpec::new(norm.normalize(&cfg.grid.lo), norm.normalize(&cfg.grid.hi), cfg.grid.cells.clone())?;
        Ok(Self { cfg, sim, spec, norm, grid })
    }

    fn seed(&self, stage: &str) -> u64 {
        named_seed(self.cfg.seed, stage)
    }

    pub fn train_policy(&self) -> Result<(MlpPolicy, Vec<GenerationStats>)> {
        let mut pc = self.cfg.policy.clone();
        pc.seed = self.seed("policy");
        train_policy(&self.sim, &pc, &[])
    }

    /// Safe rollouts plus kNN-labeled unsafe samples, in raw observation units.
    pub fn collect(&self, law: &dyn FeedbackLaw) -> Result<LabeledDataset> {
        let safe = collect_safe(&self.sim, law, &self.spec, &self.cfg.collect, self.seed("collect"))?;
        info!("collected {} safe states ({} of {} rollouts crashed)", safe.safe.len(), safe.crashed, safe.total);
        let (lo, hi) = sampling_box(&safe.safe, self.cfg.unsafe_.box_factor)?;
        let u = &self.cfg.unsafe_;
        let unsafe_ = fill_unsafe(&safe.safe, Vec::new(), u.target, u.m, u.k, (&lo, &hi), &self.norm, self.seed("unsafe"))?;
        Ok(LabeledDataset { safe: safe.safe, unsafe_, transitions: safe.transitions, archive: safe.archive })
    }

    pub fn archive(&self, ds: &LabeledDataset) -> Result<Archive> {
        Archive::new(self.spec.clone(), self.norm.clone(), ds.archive.clone())
    }

    /// Safe, unsafe, and transition samples mapped into network coordinates.
    pub fn normalized(&self, ds: &LabeledDataset) -> LabeledDataset {
        let n = |v: &Vec<f64>| self.norm.normalize(v);
        LabeledDataset {
            safe: ds.safe.iter().map(n).collect(),
            unsafe_: ds.unsafe_.iter().map(n).collect(),
            transitions: ds.transitions.iter().map(|t| Transition { s: n(&t.s), s_next: n(&t.s_next), dt: t.dt }).collect(),
            archive: Vec::new(),
        }
    }

    pub fn train_barrier(&self, ds_norm: &LabeledDataset) -> Result<TrainOutcome> {
        let mut bc = self.cfg.barrier;
        bc.seed = self.seed("barrier");
        let data = BarrierData { safe: &ds_norm.safe, unsafe_: &ds_norm.unsafe_, transitions: &ds_norm.transitions };
        train_barrier(None, self.cfg.barrier_hidden, data, &bc)
    }

    pub fn certify(&self, net: &BarrierNet, law: &dyn FeedbackLaw, archive: &Archive) -> Result<CertReport> {
        certify_grid(net, &ObservedLoop::new(&self.sim, law, archive), &self.grid, &self.cfg.certify)
    }

    pub fn run_loop(
        &self,
        ds_norm: LabeledDataset,
        law: &dyn FeedbackLaw,
        archive: &Archive,
        observe: impl FnMut(RoundView<'_>) -> Result<()>,
    ) -> Result<LoopOutcome> {
        let mut lc = self.cfg.loop_config();
        lc.initial.seed = self.seed("barrier");
        lc.retrain.seed = self.seed("retrain");
        run_loop(&ObservedLoop::new(&self.sim, law, archive), ds_norm, &self.grid, &lc, observe)
    }

    pub fn monitor_config(&self, horizon: usize) -> MonitorConfig {
        MonitorConfig::new(self.cfg.monitor.level, horizon, self.cfg.monitor.kappa_max)
    }

    pub fn curvature_rollout<'a>(&'a self, law: &'a dyn FeedbackLaw, archive: &'a Archive, mc: &MonitorConfig) -> Result<CurvatureRollout<'a>> {
        CurvatureRollout::new(&self.sim, law, archive, &mc.curvatures, self.cfg.collect.crash_d_e)
    }

    pub fn monitor(&self, net: &BarrierNet, report: &CertReport, law: &dyn FeedbackLaw, archive: &Archive, horizon: usize) -> Result<Vec<MonitorFlag>> {
        let mc = self.monitor_config(horizon);
        let level = extract_level_set(net, &self.grid, mc.level)?;
        let sys = self.curvature_rollout(law, archive, &mc)?;
        reach_flags(&sys, &level, &uncertified_boxes(report), &mc)
    }

    pub fn study_sim(&self) -> Result<Simulator> {
        Ok(match self.cfg.study.track.as_str() {
            "mixed_loop" => self.sim.with_path(Arc::new(Path::mixed_loop()?)),
            _ => self.sim.clone(),
        })
    }

    pub fn stanley(&self) -> Stanley {
        let s = &self.cfg.study;
        Stanley { k: s.stanley_k, k_v: s.stanley_kv, v_target: self.cfg.policy.v_target, limits: self.cfg.sim.limits }
    }

    /// Controllers compared by the study, in output order: neural, Stanley, MPC.
    pub fn controllers(&self, policy: &MlpPolicy) -> Vec<(String, ControllerFactory)> {
        let p = policy.clone();
        let st = self.stanley();
        let mpc = self.cfg.study.mpc;
        vec![
            ("neural".into(), Box::new(move |_| Box::new(p.clone()) as Box<dyn Controller>) as ControllerFactory),
            ("stanley".into(), Box::new(move |_| Box::new(st) as Box<dyn Controller>)),
            ("mpc".into(), Box::new(move |seed| Box::new(ShootingMpc::new(mpc, seed)) as Box<dyn Controller>)),
        ]
    }

    pub fn study_starts(&self, net: &BarrierNet) -> Result<Vec<Vec<f64>>> {
        interior_starts(net, &self.grid, self.cfg.study.n_starts, self.seed("study-starts"))
    }

    /// Escape rates plus the first `n_plot` trajectories of each controller.
    pub fn compare(&self, net: &BarrierNet, policy: &MlpPolicy, archive: &Archive) -> Result<(Vec<UnsafeRate>, Vec<(String, Trajectory)>)> {
        let sim = self.study_sim()?;
        let study = VehicleStudy { sim: &sim, archive, controllers: self.controllers(policy), crash_d_e: self.cfg.collect.crash_d_e, seed: self.seed("study") };
        let starts = self.study_starts(net)?;
        let h = self.cfg.study.horizon;
        let rates = unsafe_rate_study(net, &study.names(), &starts, h, |c, i, z, h| study.observations(c, i, z, h))?;
        let mut trajs = Vec::new();
        for (c, name) in study.names().iter().enumerate() {
            for (i, z) in starts.iter().enumerate().take(self.cfg.study.n_plot) {
                trajs.push((format!("{name}:{i}"), study.trajectory(c, i, z, h)?));
            }
        }
        Ok((rates, trajs))
    }

    pub fn barrier_file(&self, net: &BarrierNet) -> BarrierFile {
        BarrierFile::new(net, self.spec.dims.iter().map(|d| d.name().to_string()).collect(), self.norm.center.clone(), self.norm.scale.clone())
    }
}
