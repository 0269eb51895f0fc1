//! Sound enclosures of the barrier value, its gradient, the closed-loop flow,
//! and the Lie derivative over a box.

use super::interval::{Hyperbox, Interval};
use crate::barrier::{tanh, BarrierNet};
use crate::error::{check_dim, Result};
use crate::vehicle::{finite_diff_jacobian, ClosedLoop};

/// Relative outward padding absorbing floating-point rounding (including
/// `tanh` library error) in the bound arithmetic.
const REL_PAD: f64 = 1e-12;

fn pad_for(magnitude: f64) -> f64 {
    REL_PAD * (1.0 + magnitude) + f64::MIN_POSITIVE
}

/// Exact pre-activation interval of hidden unit `j`, padded outward.
fn preact_interval(net: &BarrierNet, j: usize, b: &Hyperbox) -> Interval {
    let row = net.w1_row(j);
    let c = net.preactivation(j, &b.center);
    let r: f64 = row.iter().zip(&b.delta).map(|(w, d)| w.abs() * d).sum();
    let mag: f64 = row.iter().zip(&b.center).map(|(w, x)| (w * x).abs()).sum::<f64>() + net.b1[j].abs() + r;
    Interval::around(c, r).pad(pad_for(mag))
}

/// `1 - tanh^2` over an interval: unimodal with its maximum 1 at 0.
fn dtanh_interval(z: &Interval) -> Interval {
    let d = |x: f64| {
        let t = tanh(x);
        1.0 - t * t
    };
    let (a, b) = (d(z.lo), d(z.hi));
    let hi = if z.lo <= 0.0 && 0.0 <= z.hi { 1.0 } else { a.max(b) };
    Interval { lo: (a.min(b) - pad_for(1.0)).max(0.0), hi: (hi + pad_for(1.0)).min(1.0) }
}

/// Enclosure of `B` over the box: per-neuron interval propagation,
/// intersected with the mean-value form `B(c) + [grad B] . [-delta, delta]`.
///
/// Interval propagation alone cannot cancel opposite-signed output weights,
/// so its width grows with `sum |W2|`; the mean-value form is first-order in
/// `delta`. Both contain the range, hence so does their intersection.
pub fn output_bounds(net: &BarrierNet, b: &Hyperbox) -> Result<Interval> {
    let ibp = propagated_bounds(net, b)?;
    let grad = grad_bounds(net, b)?;
    let r: f64 = grad.iter().zip(&b.delta).map(|(g, d)| g.lo.abs().max(g.hi.abs()) * d).sum();
    let mag = net.b2.abs() + net.w2.iter().map(|w| w.abs()).sum::<f64>() + r;
    let mvf = Interval::around(net.eval_unchecked(&b.center), r).pad(pad_for(mag));
    Ok(ibp.intersect(&mvf).unwrap_or(ibp))
}

/// Per-neuron interval propagation alone.
pub fn propagated_bounds(net: &BarrierNet, b: &Hyperbox) -> Result<Interval> {
    check_dim(net.input, b.dim())?;
    let mut acc = Interval::point(net.b2);
    let mut mag = net.b2.abs();
    for j in 0..net.hidden {
        let z = preact_interval(net, j, b);
        let t = Interval { lo: tanh(z.lo), hi: tanh(z.hi) };
        acc = acc.add(&t.scale(net.w2[j]));
        mag += net.w2[j].abs();
    }
    Ok(acc.pad(pad_for(mag)))
}

/// `tanh'' = -2 tanh (1 - tanh^2)` over an interval. Its extremes
/// `-+4/(3 sqrt 3)` sit at `z = +-atanh(1/sqrt 3)`.
fn d2tanh_interval(z: &Interval) -> Interval {
    let d2 = |x: f64| {
        let t = tanh(x);
        -2.0 * t * (1.0 - t * t)
    };
    let zc = (1.0 / 3f64.sqrt()).atanh();
    let peak = 4.0 / (3.0 * 3f64.sqrt());
    let (a, b) = (d2(z.lo), d2(z.hi));
    let mut lo = a.min(b);
    let mut hi = a.max(b);
    if z.contains(zc) {
        lo = -peak;
    }
    if z.contains(-zc) {
        hi = peak;
    }
    Interval { lo: (lo - pad_for(1.0)).max(-peak - pad_for(1.0)), hi: (hi + pad_for(1.0)).min(peak + pad_for(1.0)) }
}

/// Per-dimension enclosures of `dB/dx_i` over the box: the per-neuron sum of
/// `W2_j W1_ji [tanh'(z_j)]`, intersected with the mean-value form
/// `grad B(c) + [H] [-delta, delta]` where `[H]` encloses the Hessian.
pub fn grad_bounds(net: &BarrierNet, b: &Hyperbox) -> Result<Vec<Interval>> {
    check_dim(net.input, b.dim())?;
    let n = net.input;
    let mut acc = vec![Interval::point(0.0); n];
    let mut mag = vec![0.0; n];
    let mut center = vec![0.0; n];
    // radius of H[-delta, delta] per output dimension
    let mut h_lo = vec![0.0; n * n];
    let mut h_hi = vec![0.0; n * n];
    for j in 0..net.hidden {
        let z = preact_interval(net, j, b);
        let s = dtanh_interval(&z);
        let s2 = d2tanh_interval(&z);
        let tc = tanh(net.preactivation(j, &b.center));
        let dc = 1.0 - tc * tc;
        let row = net.w1_row(j);
        for (i, w) in row.iter().enumerate() {
            let c = net.w2[j] * w;
            acc[i] = acc[i].add(&s.scale(c));
            mag[i] += c.abs();
            center[i] += c * dc;
            for (k, wk) in row.iter().enumerate() {
                let h = s2.scale(c * wk);
                h_lo[i * n + k] += h.lo;
                h_hi[i * n + k] += h.hi;
            }
        }
    }
    Ok((0..n)
        .map(|i| {
            let naive = acc[i].pad(pad_for(mag[i]));
            let r: f64 = (0..n).map(|k| h_lo[i * n + k].abs().max(h_hi[i * n + k].abs()) * b.delta[k]).sum();
            let mvf = Interval::around(center[i], r).pad(pad_for(mag[i] * (1.0 + r)));
            naive.intersect(&mvf).unwrap_or(naive)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsBoundConfig {
    /// Bound on the flow's second-derivative effect, in input units per second.
    pub lipschitz: f64,
    /// Extra fraction of the first-order sweep `|J| delta`.
    pub jacobian_bloat: f64,
    /// Finite-difference probe step as a fraction of the cell half-width.
    pub probe_fraction: f64,
}

impl Default for DynamicsBoundConfig {
    fn default() -> Self {
        Self { lipschitz: 10.0, jacobian_bloat: 0.1, probe_fraction: 1.0 }
    }
}

/// Estimated flow range over the box: `f(c) ± ((1 + bloat) |J| delta + L dt)`.
///
/// `f` and `J` are one-step finite-difference estimates at the center, with
/// probes anchored to the center's full state.
pub fn dynamics_bounds(sys: &impl ClosedLoop, b: &Hyperbox, cfg: &DynamicsBoundConfig) -> Result<Vec<Interval>> {
    check_dim(sys.dim(), b.dim())?;
    let probe: Vec<f64> = b.delta.iter().map(|d| (d * cfg.probe_fraction).max(1e-9)).collect();
    let (f0, jac) = finite_diff_jacobian(sys, &b.center, &probe)?;
    let ldt = cfg.lipschitz * sys.dt();
    Ok(f0
        .iter()
        .zip(&jac)
        .map(|(f, row)| {
            let sweep: f64 = row.iter().zip(&b.delta).map(|(j, d)| j.abs() * d).sum();
            Interval::around(*f, (1.0 + cfg.jacobian_bloat) * sweep + ldt)
        })
        .collect())
}

/// Lower end of the interval dot product `sum_i grad_i * flow_i`.
pub fn lie_lower_bound(grad: &[Interval], flow: &[Interval]) -> Result<f64> {
    check_dim(grad.len(), flow.len())?;
    Ok(grad.iter().zip(flow).map(|(g, f)| g.mul(f).lo).sum())
}
