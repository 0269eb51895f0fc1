//! Path-tracking controllers and closed-loop rollouts.

pub mod cem;
pub mod mpc;
pub mod policy;

pub use cem::{train_policy, GenerationStats, PolicyTrainConfig, RewardWeights};
pub use mpc::{MpcConfig, ShootingMpc};
pub use policy::{MlpPolicy, PolicyFile};

use crate::error::Result;
use crate::geometry::PathFrame;
use crate::obs::FeedbackLaw;
use crate::vehicle::{Action, ActionLimits, Simulator, VehicleState};

/// Anything that picks an action for the simulator's current situation.
pub trait Controller {
    fn name(&self) -> &str;
    fn act(&mut self, sim: &Simulator, state: &VehicleState, frame: &PathFrame) -> Result<Action>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stanley {
    pub k: f64,
    pub k_v: f64,
    pub v_target: f64,
    pub limits: ActionLimits,
}

/// Stanley steering plus proportional speed control.
///
/// `delta = -theta_e - atan(k d_e / v_x)`, so a vehicle left of the path
/// (`d_e > 0`) steers right. Steering and acceleration are clamped.
pub fn stanley(frame: &PathFrame, state: &VehicleState, k: f64, k_v: f64, v_target: f64, limits: &ActionLimits) -> Action {
    let delta = -frame.theta_e - (k * frame.d_e).atan2(state.v_x);
    let a = k_v * (v_target - state.v_x);
    limits.clamp(Action { a, delta })
}

impl FeedbackLaw for Stanley {
    fn act(&self, state: &VehicleState, frame: &PathFrame) -> Action {
        stanley(frame, state, self.k, self.k_v, self.v_target, &self.limits)
    }
}

impl Controller for Stanley {
    fn name(&self) -> &str {
        "stanley"
    }

    fn act(&mut self, _sim: &Simulator, state: &VehicleState, frame: &PathFrame) -> Result<Action> {
        Ok(FeedbackLaw::act(self, state, frame))
    }
}

impl Controller for MlpPolicy {
    fn name(&self) -> &str {
        "neural"
    }

    fn act(&mut self, _sim: &Simulator, state: &VehicleState, frame: &PathFrame) -> Result<Action> {
        Ok(FeedbackLaw::act(self, state, frame))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Visited states including the initial one.
    pub states: Vec<VehicleState>,
    pub frames: Vec<PathFrame>,
    /// `actions[i]` was applied in `states[i]`.
    pub actions: Vec<Action>,
    pub crashed: bool,
}

/// Runs `ctrl` from `init` for up to `steps` steps.
///
/// Stops early (and sets `crashed`) when `|d_e|` exceeds `crash_d_e` or the
/// dynamic model leaves its valid speed range.
pub fn rollout(sim: &mut Simulator, ctrl: &mut dyn Controller, init: VehicleState, steps: usize, crash_d_e: f64) -> Result<Trajectory> {
    sim.reset(init)?;
    let mut traj = Trajectory { states: vec![init], frames: vec![sim.frame()], ..Default::default() };
    for _ in 0..steps {
        let state = *sim.state();
        let frame = *traj.frames.last().unwrap();
        if frame.d_e.abs() > crash_d_e {
            traj.crashed = true;
            break;
        }
        let u = ctrl.act(sim, &state, &frame)?;
        let out = sim.step(u)?;
        traj.actions.push(sim.config().limits.clamp(u));
        if out.crashed {
            traj.crashed = true;
            break;
        }
        traj.states.push(out.state);
        traj.frames.push(out.frame);
    }
    if let Some(f) = traj.frames.last() {
        if f.d_e.abs() > crash_d_e {
            traj.crashed = true;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn frame(d_e: f64, theta_e: f64) -> PathFrame {
        PathFrame { s: 0.0, d_e, theta_e, kappa: 0.0 }
    }

    #[test]
    fn stanley_equilibrium() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 10.0);
        let u = stanley(&frame(0.0, 0.0), &s, 1.0, 0.5, 10.0, &ActionLimits::default());
        assert_eq!(u, Action::new(0.0, 0.0));
    }

    #[test]
    fn stanley_cross_track_term() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let limits = ActionLimits { delta_max: 1.0, ..Default::default() };
        let u = stanley(&frame(1.0, 0.0), &s, 1.0, 0.0, 1.0, &limits);
        assert_abs_diff_eq!(u.delta, -FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn stanley_saturates() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 10.0);
        let limits = ActionLimits::default();
        let u = stanley(&frame(1e6, 0.0), &s, 1.0, 0.0, 10.0, &limits);
        assert_eq!(u.delta, -limits.delta_max);
    }

    #[test]
    fn stanley_is_odd_on_straights() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 7.0);
        let limits = ActionLimits { delta_max: 10.0, ..Default::default() };
        for &(d, th) in &[(0.3, 0.1), (-1.2, 0.4), (2.0, -0.3)] {
            let a = stanley(&frame(d, th), &s, 2.0, 0.0, 7.0, &limits);
            let b = stanley(&frame(-d, -th), &s, 2.0, 0.0, 7.0, &limits);
            assert_abs_diff_eq!(a.delta, -b.delta, epsilon = 1e-15);
        }
    }
}
