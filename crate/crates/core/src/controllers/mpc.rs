//! Random-shooting model predictive control on a planning copy of the simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Controller;
use crate::error::{Error, Result};
use crate::geometry::PathFrame;
use crate::vehicle::{Action, Simulator, VehicleState};

const CRASH_COST: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    /// Planning horizon in simulator steps.
    pub horizon: usize,
    pub samples: usize,
    /// Steps each sampled action is held for.
    pub hold: usize,
    pub w_theta: f64,
    pub w_v: f64,
    pub v_target: f64,
    /// Also evaluate the all-zero action sequence.
    pub include_zero: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { horizon: 25, samples: 64, hold: 5, w_theta: 1.0, w_v: 0.1, v_target: 10.0, include_zero: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub sequences: Vec<Vec<Action>>,
    pub costs: Vec<f64>,
    pub best: usize,
}

impl MpcPlan {
    pub fn action(&self) -> Action {
        self.sequences[self.best][0]
    }
}

#[derive(Debug, Clone)]
pub struct ShootingMpc {
    pub cfg: MpcConfig,
    rng: ChaCha8Rng,
}

/// Tracking cost of applying `seq` from `state`; crashing rollouts cost `1e9`.
pub fn sequence_cost(sim: &Simulator, state: &VehicleState, seq: &[Action], cfg: &MpcConfig) -> f64 {
    let mut s = *state;
    let mut cost = 0.0;
    for u in seq {
        s = match sim.successor(&s, *u) {
            Ok(n) => n,
            Err(_) => return CRASH_COST + cost,
        };
        let f = sim.frame_of(&s);
        let dv = s.v_x - cfg.v_target;
        cost += f.d_e * f.d_e + cfg.w_theta * f.theta_e * f.theta_e + cfg.w_v * dv * dv;
    }
    cost
}

impl ShootingMpc {
    pub fn new(cfg: MpcConfig, seed: u64) -> Self {
        Self { cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn sample_sequence(&mut self, sim: &Simulator) -> Vec<Action> {
        let l = sim.config().limits;
        let hold = self.cfg.hold.max(1);
        let knots = self.cfg.horizon.div_ceil(hold);
        let knot_actions: Vec<Action> = (0..knots)
            .map(|_| Action {
                a: self.rng.random_range(l.a_min..=l.a_max),
                delta: self.rng.random_range(-l.delta_max..=l.delta_max),
            })
            .collect();
        (0..self.cfg.horizon).map(|t| knot_actions[t / hold]).collect()
    }

    /// Samples and scores candidate sequences; the best has minimal cost
    /// (lowest index on ties).
    pub fn plan(&mut self, sim: &Simulator, state: &VehicleState) -> Result<MpcPlan> {
        if !sim.capabilities().arbitrary_reset {
            return Err(Error::ResetUnsupported);
        }
        if self.cfg.horizon == 0 {
            return Err(Error::InvalidArgument("MPC horizon must be positive".into()));
        }
        let mut sequences = Vec::with_capacity(self.cfg.samples + 1);
        if self.cfg.include_zero {
            sequences.push(vec![Action::default(); self.cfg.horizon]);
        }
        for _ in 0..self.cfg.samples {
            sequences.push(self.sample_sequence(sim));
        }
        if sequences.is_empty() {
            return Err(Error::InvalidArgument("MPC needs at least one candidate".into()));
        }
        let costs: Vec<f64> = sequences.iter().map(|s| sequence_cost(sim, state, s, &self.cfg)).collect();
        let best = costs
            .iter()
            .enumerate()
            .fold(0, |b, (i, c)| if *c < costs[b] { i } else { b });
        Ok(MpcPlan { sequences, costs, best })
    }
}

impl Controller for ShootingMpc {
    fn name(&self) -> &str {
        "mpc"
    }

    fn act(&mut self, sim: &Simulator, state: &VehicleState, _frame: &PathFrame) -> Result<Action> {
        Ok(self.plan(sim, state)?.action())
    }
}

/// One-shot MPC action from `state`, deterministic in `seed`.
pub fn mpc_shooting(sim: &Simulator, state: &VehicleState, cfg: MpcConfig, seed: u64) -> Result<Action> {
    Ok(ShootingMpc::new(cfg, seed).plan(sim, state)?.action())
}
