//! ReLU multilayer perceptron policy with tanh-squashed action outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::PathFrame;
use crate::obs::{policy_obs_dim, policy_observation, FeedbackLaw};
use crate::vehicle::{Action, ActionLimits, ModelKind, VehicleState};

/// Fully connected layer, weights stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn uniform<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut sample = || rng.random_range(-bound..bound);
        let w = (0..n_in * n_out).map(|_| sample()).collect();
        let b = (0..n_out).map(|_| sample()).collect();
        Self { n_in, n_out, w, b }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.w.chunks_exact(self.n_in).zip(&self.b) {
            out.push(row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b);
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks_exact(self.n_in).map(<[f64]>::to_vec).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self> {
        let n_out = rows.len();
        check_dim(n_out, b.len())?;
        let n_in = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_in) {
            return Err(Error::InvalidArgument("ragged weight matrix".into()));
        }
        Ok(Self { n_in, n_out, w: rows.concat(), b })
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Two ReLU hidden layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub layers: [Dense; 3],
    pub model: ModelKind,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub limits: ActionLimits,
}

impl MlpPolicy {
    pub fn new_random<R: Rng>(model: ModelKind, hidden: usize, limits: ActionLimits, input_offset: Vec<f64>, input_scale: Vec<f64>, rng: &mut R) -> Result<Self> {
        let n = policy_obs_dim(model);
        check_dim(n, input_offset.len())?;
        check_dim(n, input_scale.len())?;
        let layers = [Dense::uniform(n, hidden, rng), Dense::uniform(hidden, hidden, rng), Dense::uniform(hidden, 2, rng)];
        Ok(Self { layers, model, input_offset, input_scale, limits })
    }

    pub fn zeros(model: ModelKind, hidden: usize, limits: ActionLimits) -> Self {
        let n = policy_obs_dim(model);
        Self {
            layers: [Dense::zeros(n, hidden), Dense::zeros(hidden, hidden), Dense::zeros(hidden, 2)],
            model,
            input_offset: vec![0.0; n],
            input_scale: vec![1.0; n],
            limits,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    /// Raw output-layer values before squashing.
    pub fn preactivation(&self, obs: &[f64]) -> Result<[f64; 2]> {
        check_dim(self.input_dim(), obs.len())?;
        let x: Vec<f64> = obs
            .iter()
            .zip(&self.input_offset)
            .zip(&self.input_scale)
            .map(|((o, c), s)| (o - c) / s)
            .collect();
        let mut h1 = Vec::with_capacity(self.layers[0].n_out);
        let mut h2 = Vec::with_capacity(self.layers[1].n_out);
        let mut y = Vec::with_capacity(2);
        self.layers[0].forward_into(&x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[1].forward_into(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[2].forward_into(&h2, &mut y);
        Ok([y[0], y[1]])
    }

    /// Deterministic action for an observation vector; always within `limits`.
    pub fn neural_act(&self, obs: &[f64]) -> Result<Action> {
        let y = self.preactivation(obs)?;
        let l = &self.limits;
        let mid = 0.5 * (l.a_max + l.a_min);
        let half = 0.5 * (l.a_max - l.a_min);
        let a = (mid + half * y[0].tanh()).clamp(l.a_min, l.a_max);
        let delta = (l.delta_max * y[1].tanh()).clamp(-l.delta_max, l.delta_max);
        Ok(Action { a, delta })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Parameters flattened as `W1, b1, W2, b2, W3, b3`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.n_params(), p.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn to_file(&self) -> PolicyFile {
        let [l1, l2, l3] = &self.layers;
        PolicyFile {
            w1: l1.rows(),
            b1: l1.b.clone(),
            w2: l2.rows(),
            b2: l2.b.clone(),
            w3: l3.rows(),
            b3: l3.b.clone(),
            model: self.model,
            input_offset: self.input_offset.clone(),
            input_scale: self.input_scale.clone(),
            limits: self.limits,
        }
    }

    pub fn from_file(f: PolicyFile) -> Result<Self> {
        let layers = [Dense::from_rows(&f.w1, f.b1)?, Dense::from_rows(&f.w2, f.b2)?, Dense::from_rows(&f.w3, f.b3)?];
        check_dim(policy_obs_dim(f.model), layers[0].n_in)?;
        check_dim(layers[0].n_out, layers[1].n_in)?;
        check_dim(layers[1].n_out, layers[2].n_in)?;
        check_dim(2, layers[2].n_out)?;
        check_dim(layers[0].n_in, f.input_offset.len())?;
        check_dim(layers[0].n_in, f.input_scale.len())?;
        Ok(Self { layers, model: f.model, input_offset: f.input_offset, input_scale: f.input_scale, limits: f.limits })
    }
}

impl FeedbackLaw for MlpPolicy {
    fn act(&self, state: &VehicleState, frame: &PathFrame) -> Action {
        let obs = policy_observation(self.model, state, frame);
        self.neural_act(&obs).expect("policy input dimension matches its model")
    }
}

/// On-disk policy weights: named row-major arrays plus scaling metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    #[serde(rename = "W3")]
    pub w3: Vec<Vec<f64>>,
    pub b3: Vec<f64>,
    pub model: ModelKind,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub limits: ActionLimits,
}
