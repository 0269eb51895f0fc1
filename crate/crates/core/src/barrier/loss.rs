//! Hinge loss over safe, unsafe, and transition samples, with analytic gradient.

use rayon::prelude::*;

use super::net::BarrierNet;
use crate::error::{Error, Result};
use crate::sampling::Transition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierLossConfig {
    pub w_s: f64,
    pub w_u: f64,
    pub w_l: f64,
    pub gamma: f64,
    /// Hinge margin on the safe and unsafe terms during training; the reported loss uses none.
    pub margin: f64,
    /// Hinge margin on the transition term during training.
    pub lie_margin: f64,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for BarrierLossConfig {
    fn default() -> Self {
        Self { w_s: 1.0, w_u: 1.0, w_l: 0.5, gamma: 1.0, margin: 0.05, lie_margin: 0.0, lr: 1e-3, momentum: 0.9, epochs: 200, batch: 256, seed: 0 }
    }
}

impl BarrierLossConfig {
    /// Margins applied while training.
    pub fn margins(&self) -> Margins {
        Margins { value: self.margin, lie: self.lie_margin }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.w_s, self.w_u, self.w_l, self.gamma, self.lr];
        if pos.iter().any(|v| !(*v > 0.0)) || self.margin < 0.0 || self.lie_margin < 0.0 || !(0.0..1.0).contains(&self.momentum) || self.batch == 0 {
            return Err(Error::Config("barrier: weights, gamma, lr and batch must be positive; momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Hinge offsets: safe `phi(value - B)`, unsafe `phi(B + value)`,
/// transition `phi(lie - L_fd B - gamma B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub value: f64,
    pub lie: f64,
}

impl Margins {
    pub const NONE: Margins = Margins { value: 0.0, lie: 0.0 };
}

/// Training samples in the network's input coordinates.
#[derive(Debug, Clone, Copy)]
pub struct BarrierData<'a> {
    pub safe: &'a [Vec<f64>],
    pub unsafe_: &'a [Vec<f64>],
    pub transitions: &'a [Transition],
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Per-term hinge arguments; a sample violates its condition when positive.
#[inline]
fn safe_arg(b: f64, margin: f64) -> f64 {
    margin - b
}

#[inline]
fn unsafe_arg(b: f64, margin: f64) -> f64 {
    b + margin
}

#[inline]
fn lie_arg(b: f64, b_next: f64, dt: f64, gamma: f64) -> f64 {
    -(b_next - b) / dt - gamma * b
}

fn mean_par<T: Sync>(items: &[T], f: impl Fn(&T) -> f64 + Sync) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    // fixed chunking keeps the reduction order independent of scheduling
    let partial: Vec<f64> = items.par_chunks(512).map(|c| c.iter().map(&f).sum::<f64>()).collect();
    partial.iter().sum::<f64>() / items.len() as f64
}

/// Loss with the given hinge margins. Empty sets contribute zero.
pub fn barrier_loss_with_margin(net: &BarrierNet, data: BarrierData<'_>, cfg: &BarrierLossConfig, m: Margins) -> f64 {
    let ls = mean_par(data.safe, |x| relu(safe_arg(net.eval_unchecked(x), m.value)));
    let lu = mean_par(data.unsafe_, |x| relu(unsafe_arg(net.eval_unchecked(x), m.value)));
    let ll = mean_par(data.transitions, |t| {
        relu(m.lie + lie_arg(net.eval_unchecked(&t.s), net.eval_unchecked(&t.s_next), t.dt, cfg.gamma))
    });
    cfg.w_s * ls + cfg.w_u * lu + cfg.w_l * ll
}

fn check_data(net: &BarrierNet, data: BarrierData<'_>) -> Result<()> {
    if data.safe.is_empty() {
        return Err(Error::EmptyDataset("safe set"));
    }
    let n = net.input;
    let bad = data.safe.iter().chain(data.unsafe_).any(|x| x.len() != n)
        || data.transitions.iter().any(|t| t.s.len() != n || t.s_next.len() != n || !(t.dt > 0.0));
    if bad {
        return Err(Error::InvalidArgument("sample dimension or transition dt mismatch".into()));
    }
    Ok(())
}

/// `w_s mean phi(-B) + w_u mean phi(B) + w_l mean phi(-L_fd B - gamma B)`, `phi = max(., 0)`.
pub fn barrier_loss(net: &BarrierNet, data: BarrierData<'_>, cfg: &BarrierLossConfig) -> Result<f64> {
    check_data(net, data)?;
    Ok(barrier_loss_with_margin(net, data, cfg, Margins::NONE))
}

/// One mini-batch entry: which set, and the index into it.
#[derive(Clone, Copy)]
enum Term {
    Safe(usize),
    Unsafe(usize),
    Lie(usize),
}

const GRAD_CHUNK: usize = 64;

/// Margin loss and its parameter gradient on one mini-batch (indices into each set).
/// Hinges exactly at zero take the zero subgradient.
pub fn loss_and_grad(
    net: &BarrierNet,
    data: BarrierData<'_>,
    batch: (&[usize], &[usize], &[usize]),
    cfg: &BarrierLossConfig,
    m: Margins,
) -> (f64, Vec<f64>) {
    let (bs, bu, bt) = batch;
    let per = |w: f64, n: usize| if n == 0 { 0.0 } else { w / n as f64 };
    let (ws, wu, wl) = (per(cfg.w_s, bs.len()), per(cfg.w_u, bu.len()), per(cfg.w_l, bt.len()));
    let terms: Vec<Term> =
        bs.iter().map(|&i| Term::Safe(i)).chain(bu.iter().map(|&i| Term::Unsafe(i))).chain(bt.iter().map(|&i| Term::Lie(i))).collect();
    // fixed chunks summed in order keep the result independent of thread count
    let partials: Vec<(f64, Vec<f64>)> = terms
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; net.n_params()];
            let mut loss = 0.0;
            let mut t0 = vec![0.0; net.hidden];
            let mut t1 = vec![0.0; net.hidden];
            for term in chunk {
                match *term {
                    Term::Safe(i) => {
                        let x = &data.safe[i];
                        let v = safe_arg(net.forward_into(x, &mut t0), m.value);
                        if v > 0.0 {
                            loss += ws * v;
                            net.accumulate_param_grad_with(x, &t0, -ws, &mut g);
                        }
                    }
                    Term::Unsafe(i) => {
                        let x = &data.unsafe_[i];
                        let v = unsafe_arg(net.forward_into(x, &mut t0), m.value);
                        if v > 0.0 {
                            loss += wu * v;
                            net.accumulate_param_grad_with(x, &t0, wu, &mut g);
                        }
                    }
                    Term::Lie(i) => {
                        let t = &data.transitions[i];
                        let b0 = net.forward_into(&t.s, &mut t0);
                        let b1 = net.forward_into(&t.s_next, &mut t1);
                        let v = m.lie + lie_arg(b0, b1, t.dt, cfg.gamma);
                        if v > 0.0 {
                            loss += wl * v;
                            net.accumulate_param_grad_with(&t.s_next, &t1, -wl / t.dt, &mut g);
                            net.accumulate_param_grad_with(&t.s, &t0, wl * (1.0 / t.dt - cfg.gamma), &mut g);
                        }
                    }
                }
            }
            (loss, g)
        })
        .collect();
    let mut g = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for (l, pg) in partials {
        loss += l;
        for (a, b) in g.iter_mut().zip(&pg) {
            *a += b;
        }
    }
    (loss, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lin1d() -> BarrierNet {
        // B(x) = tanh(x)
        BarrierNet::from_parts(vec![vec![1.0]], vec![0.0], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn single_safe_violation() {
        let mut n = BarrierNet::zeros(1, 1);
        n.b2 = -2.0;
        let safe = vec![vec![0.0]];
        let cfg = BarrierLossConfig { w_s: 1.0, ..Default::default() };
        let d = BarrierData { safe: &safe, unsafe_: &[], transitions: &[] };
        assert_eq!(barrier_loss(&n, d, &cfg).unwrap(), 2.0);
    }

    #[test]
    fn transition_term_by_hand() {
        // B(s) = 0.5, B(s') = 0.5 - dt so L_fd B = -1
        let n = lin1d();
        let dt: f64 = 0.1;
        let s = vec![0.5f64.atanh()];
        let s2 = vec![(0.5 - dt).atanh()];
        let safe = vec![s.clone()];
        let tr = vec![Transition { s, s_next: s2, dt }];
        let cfg = BarrierLossConfig { w_l: 1.0, gamma: 0.5, ..Default::default() };
        let d = BarrierData { safe: &safe, unsafe_: &[], transitions: &tr };
        assert_abs_diff_eq!(barrier_loss(&n, d, &cfg).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn empty_safe_rejected() {
        let d = BarrierData { safe: &[], unsafe_: &[], transitions: &[] };
        assert!(barrier_loss(&lin1d(), d, &BarrierLossConfig::default()).is_err());
    }
}
