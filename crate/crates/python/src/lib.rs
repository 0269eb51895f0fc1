//! Python bindings: barrier networks, interval bounds, the simulator, and the CLI.

use std::path::PathBuf;

use almost_barrier::barrier::{BarrierFile, BarrierNet};
use almost_barrier::certify::{self, Hyperbox, Interval};
use almost_barrier::config::ExperimentConfig;
use almost_barrier::obs::FeedbackLaw;
use almost_barrier::pipeline::Env;
use almost_barrier::vehicle::{Action, VehicleState};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: almost_barrier::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Bounds = (f64, f64);

fn interval(b: Bounds) -> PyResult<Interval> {
    Interval::new(b.0, b.1).map_err(err)
}

/// One-hidden-layer tanh network `B(x) = W2 tanh(W1 x + b1) + b2`.
#[pyclass(name = "BarrierNet")]
#[derive(Clone)]
struct PyBarrierNet(BarrierNet);

#[pymethods]
impl PyBarrierNet {
    #[new]
    #[pyo3(signature = (input, hidden, seed = 0))]
    fn new(input: usize, hidden: usize, seed: u64) -> Self {
        Self(BarrierNet::random(input, hidden, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    /// Loads the network from a `barrier.json` file. Inputs are normalized coordinates.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f: BarrierFile = almost_barrier::io::read_json(&path).map_err(err)?;
        f.net().map(Self).map_err(err)
    }

    #[getter]
    fn input(&self) -> usize {
        self.0.input
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.0.hidden
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.eval(&x).map_err(err)
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.grad(&x).map_err(err)
    }

    /// Flattened parameters in the order `W1, b1, W2, b2`.
    fn params(&self) -> Vec<f64> {
        self.0.params()
    }

    fn set_params(&mut self, p: Vec<f64>) -> PyResult<()> {
        self.0.set_params(&p).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("BarrierNet(input={}, hidden={})", self.0.input, self.0.hidden)
    }
}

/// Sound enclosure of `B` over the box `center ± delta`.
#[pyfunction]
fn output_bounds(net: &PyBarrierNet, center: Vec<f64>, delta: Vec<f64>) -> PyResult<Bounds> {
    let b = Hyperbox::new(center, delta).map_err(err)?;
    let i = certify::output_bounds(&net.0, &b).map_err(err)?;
    Ok((i.lo, i.hi))
}

/// Per-dimension enclosures of `dB/dx` over the box `center ± delta`.
#[pyfunction]
fn grad_bounds(net: &PyBarrierNet, center: Vec<f64>, delta: Vec<f64>) -> PyResult<Vec<Bounds>> {
    let b = Hyperbox::new(center, delta).map_err(err)?;
    Ok(certify::grad_bounds(&net.0, &b).map_err(err)?.iter().map(|i| (i.lo, i.hi)).collect())
}

/// Lower end of the interval dot product of `grad` and `flow`.
#[pyfunction]
fn lie_lower_bound(grad: Vec<Bounds>, flow: Vec<Bounds>) -> PyResult<f64> {
    let g = grad.into_iter().map(interval).collect::<PyResult<Vec<_>>>()?;
    let f = flow.into_iter().map(interval).collect::<PyResult<Vec<_>>>()?;
    certify::lie_lower_bound(&g, &f).map_err(err)
}

/// Simulator and Stanley controller of an experiment configuration.
#[pyclass(name = "Simulator")]
struct PySimulator {
    env: Env,
}

type Frame = (f64, f64, f64);

#[pymethods]
impl PySimulator {
    /// Builds from a `key = value` config file; `None` uses the defaults.
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = match config {
            Some(p) => {
                let text = almost_barrier::io::read_text(&p).map_err(err)?;
                ExperimentConfig::parse(&text, &p.display().to_string()).map_err(err)?
            }
            None => ExperimentConfig::default(),
        };
        Ok(Self { env: Env::new(cfg).map_err(err)? })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.env.sim.dt()
    }

    /// `(x, y, theta, v_x, v_y, r)`.
    #[getter]
    fn state(&self) -> [f64; 6] {
        self.env.sim.state().to_array()
    }

    /// `(s, d_e, theta_e)` of the current state.
    fn frame(&self) -> Frame {
        let f = self.env.sim.frame();
        (f.s, f.d_e, f.theta_e)
    }

    /// Full state at path coordinates with the given speeds.
    #[pyo3(signature = (s, d_e, theta_e, v_x, v_y = 0.0, r = 0.0))]
    fn state_at(&self, s: f64, d_e: f64, theta_e: f64, v_x: f64, v_y: f64, r: f64) -> [f64; 6] {
        self.env.sim.state_at(s, d_e, theta_e, v_x, v_y, r).to_array()
    }

    fn reset(&mut self, state: [f64; 6]) -> PyResult<[f64; 6]> {
        self.env.sim.reset(VehicleState::from_slice(&state)).map(|s| s.to_array()).map_err(err)
    }

    /// Advances one step; returns `(state, frame, crashed)`.
    fn step(&mut self, a: f64, delta: f64) -> PyResult<([f64; 6], Frame, bool)> {
        let out = self.env.sim.step(Action::new(a, delta)).map_err(err)?;
        Ok((out.state.to_array(), (out.frame.s, out.frame.d_e, out.frame.theta_e), out.crashed))
    }

    /// Stanley action `(a, delta)` for the current state.
    fn stanley(&self) -> (f64, f64) {
        let u = self.env.stanley().act(self.env.sim.state(), &self.env.sim.frame());
        (u.a, u.delta)
    }
}

/// Runs the command-line interface with `args` (without the program name) and returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    almost_barrier::cli::run_args(std::iter::once("abarrier".to_string()).chain(args))
}

#[pymodule]
fn almost_barrier_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBarrierNet>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(output_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(grad_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(lie_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
