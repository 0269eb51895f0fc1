//! Cross-entropy method policy search with optional boundary-state resets.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::policy::MlpPolicy;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::obs::FeedbackLaw;
use crate::sampling::InitSpread;
use crate::seeds::derive_seed;
use crate::vehicle::{Simulator, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub progress: f64,
    pub d_e: f64,
    pub theta_e: f64,
    pub speed: f64,
    pub crash_penalty: f64,
    /// Episodes end (as crashes) once `|d_e|` exceeds this.
    pub crash_d_e: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { progress: 1.0, d_e: 1.0, theta_e: 0.5, speed: 0.1, crash_penalty: 100.0, crash_d_e: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrainConfig {
    pub population: usize,
    pub elites: usize,
    pub generations: usize,
    /// Rollout length in steps.
    pub horizon: usize,
    /// Rollouts per candidate per generation (shared across the population).
    pub episodes: usize,
    pub hidden: usize,
    pub sigma_init: f64,
    pub sigma_floor: f64,
    pub reward: RewardWeights,
    pub v_target: f64,
    pub init: InitSpread,
    pub input_scale: Vec<f64>,
    pub boundary_reset_fraction: f64,
    pub seed: u64,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            generations: 200,
            horizon: 300,
            episodes: 2,
            hidden: 128,
            sigma_init: 0.05,
            sigma_floor: 0.005,
            reward: RewardWeights::default(),
            v_target: 30.0,
            init: InitSpread::default(),
            input_scale: vec![1.0, 0.2, 3.0, 0.02],
            boundary_reset_fraction: 0.0,
            seed: 0,
        }
    }
}

impl PolicyTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites == 0 || self.elites >= self.population {
            return Err(Error::Config("policy: need 0 < elites < population".into()));
        }
        if !(0.0..=1.0).contains(&self.boundary_reset_fraction) {
            return Err(Error::Config("policy: boundary_reset_fraction must be in [0, 1]".into()));
        }
        if !(self.sigma_init > 0.0 && self.sigma_floor >= 0.0) {
            return Err(Error::Config("policy: sigmas must be positive".into()));
        }
        if self.episodes == 0 || self.horizon == 0 {
            return Err(Error::Config("policy: episodes and horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_return: f64,
    pub elite_mean_return: f64,
    pub mean_return: f64,
}

/// Per-step reward, excluding the crash penalty.
pub fn step_reward(w: &RewardWeights, v_target: f64, dt: f64, ds: f64, d_e: f64, theta_e: f64, v_x: f64) -> f64 {
    let progress = ds / (v_target * dt);
    let dv = v_x - v_target;
    w.progress * progress - w.d_e * d_e * d_e - w.theta_e * theta_e * theta_e - w.speed * dv * dv
}

/// Undiscounted return of one episode of `law` from `init`.
pub fn episode_return(sim: &Simulator, law: &dyn FeedbackLaw, init: &VehicleState, horizon: usize, w: &RewardWeights, v_target: f64) -> f64 {
    let path = sim.path();
    let len = path.length();
    let mut state = *init;
    let mut frame = sim.frame_of(&state);
    let mut total = 0.0;
    for _ in 0..horizon {
        let u = law.act(&state, &frame);
        let next = match sim.successor(&state, u) {
            Ok(n) => n,
            Err(_) => return total - w.crash_penalty,
        };
        let nf = sim.frame_of(&next);
        let mut ds = nf.s - frame.s;
        if path.is_closed() {
            ds = wrap_angle(ds / len * std::f64::consts::TAU) / std::f64::consts::TAU * len;
        }
        total += step_reward(w, v_target, sim.dt(), ds, nf.d_e, nf.theta_e, next.v_x);
        if nf.d_e.abs() > w.crash_d_e {
            return total - w.crash_penalty;
        }
        state = next;
        frame = nf;
    }
    total
}

/// Trains an MLP policy by the cross-entropy method.
///
/// Returns the elite-mean policy after `cfg.generations` generations and the
/// per-generation training curve. When `boundary_states` is nonempty and the
/// simulator permits arbitrary resets, a `boundary_reset_fraction` share of
/// episodes starts from uniformly drawn boundary states.
pub fn train_policy(sim: &Simulator, cfg: &PolicyTrainConfig, boundary_states: &[VehicleState]) -> Result<(MlpPolicy, Vec<GenerationStats>)> {
    cfg.validate()?;
    let model = sim.config().model;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let mut offset = vec![0.0; crate::obs::policy_obs_dim(model)];
    offset[2] = cfg.v_target;
    let mut scale = cfg.input_scale.clone();
    scale.resize(offset.len(), 1.0);
    let mut policy = MlpPolicy::new_random(model, cfg.hidden, sim.config().limits, offset, scale, &mut init_rng)?;
    policy.layers[2].w.iter_mut().for_each(|w| *w = 0.0);
    policy.layers[2].b.iter_mut().for_each(|b| *b = 0.0);

    let use_boundary = !boundary_states.is_empty() && cfg.boundary_reset_fraction > 0.0;
    if use_boundary && !sim.capabilities().arbitrary_reset {
        info!("boundary-state augmentation skipped: simulator does not allow arbitrary resets");
    }
    let use_boundary = use_boundary && sim.capabilities().arbitrary_reset;

    let n = policy.n_params();
    let mut mean = policy.params();
    let mut sigma = vec![cfg.sigma_init; n];
    let mut curve = Vec::with_capacity(cfg.generations);

    for g in 0..cfg.generations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1 + g as u64));
        let starts: Vec<VehicleState> = (0..cfg.episodes)
            .map(|_| {
                if use_boundary && rng.random::<f64>() < cfg.boundary_reset_fraction {
                    boundary_states[rng.random_range(0..boundary_states.len())]
                } else {
                    cfg.init.sample(sim, cfg.v_target, &mut rng)
                }
            })
            .collect();
        let candidates: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                mean.iter()
                    .zip(&sigma)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let returns: Vec<f64> = candidates
            .par_iter()
            .map(|params| {
                let mut p = policy.clone();
                p.set_params(params).expect("candidate has the policy's parameter count");
                starts
                    .iter()
                    .map(|s| episode_return(sim, &p, s, cfg.horizon, &cfg.reward, cfg.v_target))
                    .sum::<f64>()
                    / cfg.episodes as f64
            })
            .collect();

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|a, b| returns[*b].total_cmp(&returns[*a]).then(a.cmp(b)));
        let elites = &order[..cfg.elites];
        let k = cfg.elites as f64;
        for i in 0..n {
            let mu = elites.iter().map(|e| candidates[*e][i]).sum::<f64>() / k;
            let var = elites.iter().map(|e| (candidates[*e][i] - mu).powi(2)).sum::<f64>() / k;
            mean[i] = mu;
            sigma[i] = (var + cfg.sigma_floor * cfg.sigma_floor).sqrt();
        }
        let stats = GenerationStats {
            generation: g,
            best_return: returns[order[0]],
            elite_mean_return: elites.iter().map(|e| returns[*e]).sum::<f64>() / k,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
        };
        info!("cem generation {g}: best {:.2}, elite mean {:.2}", stats.best_return, stats.elite_mean_return);
        curve.push(stats);
    }
    policy.set_params(&mean)?;
    Ok((policy, curve))
}
