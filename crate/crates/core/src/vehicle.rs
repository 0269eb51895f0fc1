//! Kinematic and slip-aware dynamic bicycle models behind one simulator type.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Path, PathFrame, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    /// Lateral speed; always 0 in kinematic mode.
    pub v_y: f64,
    /// Yaw rate; always 0 in kinematic mode.
    pub r: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, v_x: f64) -> Self {
        Self { x, y, theta, v_x, v_y: 0.0, r: 0.0 }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.theta, self.v_x, self.v_y, self.r]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { x: v[0], y: v[1], theta: v[2], v_x: v[3], v_y: v[4], r: v[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    /// Longitudinal acceleration (m/s^2).
    pub a: f64,
    /// Steering angle (rad).
    pub delta: f64,
}

impl Action {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLimits {
    pub a_min: f64,
    pub a_max: f64,
    pub delta_max: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self { a_min: -4.0, a_max: 4.0, delta_max: 0.5 }
    }
}

impl ActionLimits {
    pub fn clamp(&self, u: Action) -> Action {
        Action {
            a: u.a.clamp(self.a_min, self.a_max),
            delta: u.delta.clamp(-self.delta_max, self.delta_max),
        }
    }

    pub fn contains(&self, u: &Action) -> bool {
        (self.a_min..=self.a_max).contains(&u.a) && u.delta.abs() <= self.delta_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub mass: f64,
    pub yaw_inertia: f64,
    pub c_f: f64,
    pub c_r: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            l_f: 1.25,
            l_r: 1.25,
            mass: 1500.0,
            yaw_inertia: 2500.0,
            c_f: 55000.0,
            c_r: 55000.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.wheelbase, self.l_f, self.l_r, self.mass, self.yaw_inertia, self.c_f, self.c_r];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("vehicle parameters must be positive".into()));
        }
        if (self.l_f + self.l_r - self.wheelbase).abs() > 1e-9 {
            return Err(Error::Config("l_f + l_r must equal the wheelbase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// One explicit step of `x' = rhs(x)` over `dt`.
fn integrate<const N: usize>(integrator: Integrator, x: [f64; N], dt: f64, rhs: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    match integrator {
        Integrator::Euler => axpy(&x, &rhs(&x), dt),
        Integrator::Rk4 => {
            let k1 = rhs(&x);
            let k2 = rhs(&axpy(&x, &k1, dt / 2.0));
            let k3 = rhs(&axpy(&x, &k2, dt / 2.0));
            let k4 = rhs(&axpy(&x, &k3, dt));
            let mut out = x;
            for i in 0..N {
                out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            out
        }
    }
}

fn check_inputs(state: &VehicleState, u: &Action, dt: f64) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    if !(u.a.is_finite() && u.delta.is_finite()) {
        return Err(Error::NonFinite("action"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Kinematic bicycle: `x' = v cos(th)`, `y' = v sin(th)`, `th' = v tan(delta)/L`, `v' = a`.
///
/// The action is used as given; speed is clamped to `[0, v_max]` after the step.
pub fn step_kinematic(state: &VehicleState, u: Action, dt: f64, p: &VehicleParams, integrator: Integrator, v_max: f64) -> Result<VehicleState> {
    check_inputs(state, &u, dt)?;
    let tan_d = u.delta.tan();
    let l = p.wheelbase;
    let x0 = [state.x, state.y, state.theta, state.v_x];
    let x1 = integrate(integrator, x0, dt, |s| {
        let (sin, cos) = s[2].sin_cos();
        [s[3] * cos, s[3] * sin, s[3] * tan_d / l, u.a]
    });
    Ok(VehicleState { x: x1[0], y: x1[1], theta: x1[2], v_x: x1[3].clamp(0.0, v_max), v_y: 0.0, r: 0.0 })
}

/// Slip angles `(alpha_f, alpha_r)` of the linear tire model.
pub fn slip_angles(v_x: f64, v_y: f64, r: f64, delta: f64, p: &VehicleParams) -> (f64, f64) {
    let alpha_f = ((v_y + p.l_f * r) / v_x).atan() - delta;
    let alpha_r = ((v_y - p.l_r * r) / v_x).atan();
    (alpha_f, alpha_r)
}

fn dynamic_rhs(s: &[f64; 6], u: Action, p: &VehicleParams) -> [f64; 6] {
    let (theta, v_x, v_y, r) = (s[2], s[3], s[4], s[5]);
    let (alpha_f, alpha_r) = slip_angles(v_x, v_y, r, u.delta, p);
    let f_fy = -p.c_f * alpha_f;
    let f_ry = -p.c_r * alpha_r;
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_d, cos_d) = u.delta.sin_cos();
    [
        v_x * cos_t - v_y * sin_t,
        v_x * sin_t + v_y * cos_t,
        r,
        u.a - f_fy * sin_d / p.mass + v_y * r,
        (f_fy * cos_d + f_ry) / p.mass - v_x * r,
        (p.l_f * f_fy * cos_d - p.l_r * f_ry) / p.yaw_inertia,
    ]
}

/// Six-state dynamic bicycle with linear cornering stiffness.
///
/// Refuses states with `v_x < v_min` since the slip angles divide by `v_x`.
pub fn step_dynamic(
    state: &VehicleState,
    u: Action,
    dt: f64,
    p: &VehicleParams,
    integrator: Integrator,
    v_min: f64,
    v_max: f64,
) -> Result<VehicleState> {
    check_inputs(state, &u, dt)?;
    if state.v_x < v_min {
        return Err(Error::BelowMinSpeed { v_x: state.v_x, v_min });
    }
    let x0 = state.to_array();
    let x1 = integrate(integrator, x0, dt, |s| dynamic_rhs(s, u, p));
    let mut next = VehicleState::from_slice(&x1);
    next.v_x = next.v_x.min(v_max);
    if !next.is_finite() {
        return Err(Error::NonFinite("dynamic step"));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub arbitrary_reset: bool,
}

/// States a non-resettable simulator may start from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSet {
    pub d_e_max: f64,
    pub theta_e_max: f64,
}

impl Default for InitialSet {
    fn default() -> Self {
        Self { d_e_max: 0.5, theta_e_max: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelKind,
    pub params: VehicleParams,
    pub limits: ActionLimits,
    pub dt: f64,
    pub integrator: Integrator,
    pub v_min: f64,
    pub v_max: f64,
    pub capabilities: Capabilities,
    pub initial_set: InitialSet,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Kinematic,
            params: VehicleParams::default(),
            limits: ActionLimits::default(),
            dt: 0.02,
            integrator: Integrator::Rk4,
            v_min: 0.5,
            v_max: 60.0,
            capabilities: Capabilities { arbitrary_reset: true },
            initial_set: InitialSet::default(),
        }
    }
}

impl SimConfig {
    /// Dynamic model that may only start near the path center.
    pub fn torcs_emulation() -> Self {
        Self {
            model: ModelKind::Dynamic,
            capabilities: Capabilities { arbitrary_reset: false },
            ..Self::default()
        }
    }
}

/// Result of a single simulator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: VehicleState,
    pub frame: PathFrame,
    /// Set when the dynamic model would leave its valid speed range.
    pub crashed: bool,
}

/// A vehicle on a track. Each worker owns its own instance.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    path: Arc<Path>,
    state: VehicleState,
}

impl Simulator {
    pub fn new(cfg: SimConfig, path: Arc<Path>) -> Result<Self> {
        cfg.params.validate()?;
        if !(cfg.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        let state = VehicleState::default();
        Ok(Self { cfg, path, state })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn path(&self) -> &Arc<Path> {
        &self.path
    }

    /// Same vehicle on a different track.
    pub fn with_path(&self, path: Arc<Path>) -> Self {
        Self { cfg: self.cfg.clone(), path, state: self.state }
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn capabilities(&self) -> Capabilities {
        self.cfg.capabilities
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn frame(&self) -> PathFrame {
        self.path.project(&self.state.pose())
    }

    pub fn frame_of(&self, state: &VehicleState) -> PathFrame {
        self.path.project(&state.pose())
    }

    /// Whether the simulator accepts `state` as a reset target.
    pub fn can_reset_to(&self, state: &VehicleState) -> bool {
        if self.cfg.capabilities.arbitrary_reset {
            return true;
        }
        let f = self.frame_of(state);
        f.d_e.abs() <= self.cfg.initial_set.d_e_max && f.theta_e.abs() <= self.cfg.initial_set.theta_e_max
    }

    pub fn reset(&mut self, state: VehicleState) -> Result<VehicleState> {
        if !state.is_finite() {
            return Err(Error::NonFinite("reset state"));
        }
        if !self.can_reset_to(&state) {
            return Err(Error::ResetUnsupported);
        }
        self.state = state;
        Ok(state)
    }

    /// Successor of `state` under `u` (clamped to the action limits) without touching internal state.
    pub fn successor(&self, state: &VehicleState, u: Action) -> Result<VehicleState> {
        let u = self.cfg.limits.clamp(u);
        match self.cfg.model {
            ModelKind::Kinematic => step_kinematic(state, u, self.cfg.dt, &self.cfg.params, self.cfg.integrator, self.cfg.v_max),
            ModelKind::Dynamic => step_dynamic(
                state,
                u,
                self.cfg.dt,
                &self.cfg.params,
                self.cfg.integrator,
                self.cfg.v_min,
                self.cfg.v_max,
            ),
        }
    }

    pub fn step(&mut self, u: Action) -> Result<StepOutcome> {
        match self.successor(&self.state, u) {
            Ok(next) => {
                self.state = next;
                Ok(StepOutcome { state: next, frame: self.frame(), crashed: false })
            }
            Err(Error::BelowMinSpeed { .. }) => Ok(StepOutcome { state: self.state, frame: self.frame(), crashed: true }),
            Err(e) => Err(e),
        }
    }

    /// Full state at path coordinates `(s, d_e, theta_e)` with the given speeds.
    pub fn state_at(&self, s: f64, d_e: f64, theta_e: f64, v_x: f64, v_y: f64, r: f64) -> VehicleState {
        let pose = self.path.place(s, d_e, theta_e);
        let (v_y, r) = match self.cfg.model {
            ModelKind::Kinematic => (0.0, 0.0),
            ModelKind::Dynamic => (v_y, r),
        };
        VehicleState { x: pose.x, y: pose.y, theta: pose.theta, v_x, v_y, r }
    }
}

/// A deterministic closed-loop system viewed through a vector of coordinates.
///
/// `successor_near` advances `x` by one step; `anchor` selects any hidden
/// context (for example the archived full state used to complete a partial
/// observation) so that nearby points share it.
pub trait ClosedLoop: Sync {
    fn dim(&self) -> usize;
    fn dt(&self) -> f64;
    /// Whether coordinate `i` is an angle to be differenced with wrapping.
    fn is_angle(&self, _i: usize) -> bool {
        false
    }
    fn successor_near(&self, anchor: &[f64], x: &[f64]) -> Result<Vec<f64>>;

    fn successor(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.successor_near(x, x)
    }
}

fn difference(sys: &impl ClosedLoop, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (p, q))| if sys.is_angle(i) { wrap_angle(p - q) } else { p - q })
        .collect()
}

/// One-step forward-difference estimate of the closed-loop vector field at `x`.
pub fn finite_diff_flow(sys: &impl ClosedLoop, x: &[f64]) -> Result<Vec<f64>> {
    finite_diff_flow_near(sys, x, x)
}

pub fn finite_diff_flow_near(sys: &impl ClosedLoop, anchor: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_dim(sys.dim(), x.len())?;
    let next = sys.successor_near(anchor, x)?;
    let dt = sys.dt();
    Ok(difference(sys, &next, x).into_iter().map(|d| d / dt).collect())
}

/// Forward-difference Jacobian of the estimated flow, `jac[j][i] = df_j/dx_i`.
///
/// Also returns the flow at `x`. Probe points share `x` as their anchor.
pub fn finite_diff_jacobian(sys: &impl ClosedLoop, x: &[f64], delta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = sys.dim();
    crate::error::check_dim(n, x.len())?;
    crate::error::check_dim(n, delta.len())?;
    let f0 = finite_diff_flow_near(sys, x, x)?;
    let mut jac = vec![vec![0.0; n]; n];
    let mut probe = x.to_vec();
    for i in 0..n {
        probe[i] = x[i] + delta[i];
        let fi = finite_diff_flow_near(sys, x, &probe)?;
        probe[i] = x[i];
        for j in 0..n {
            jac[j][i] = (fi[j] - f0[j]) / delta[i];
        }
    }
    Ok((f0, jac))
}
