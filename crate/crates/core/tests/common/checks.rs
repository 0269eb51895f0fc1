//! Self-contained oracle checks returning the first failure as an error message.

use almost_barrier::barrier::{barrier_loss, loss_and_grad, BarrierData, BarrierLossConfig, BarrierNet, Margins};
use almost_barrier::certify::{grad_bounds, lie_lower_bound, output_bounds, Hyperbox, Interval};
use almost_barrier::sampling::Transition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn random_net(rng: &mut ChaCha8Rng, input: usize, hidden: usize, scale: f64) -> BarrierNet {
    let w1 = (0..hidden).map(|_| (0..input).map(|_| rng.random_range(-scale..scale)).collect()).collect();
    let b1 = (0..hidden).map(|_| rng.random_range(-scale..scale)).collect();
    let w2 = (0..hidden).map(|_| rng.random_range(-scale..scale)).collect();
    BarrierNet::from_parts(w1, b1, w2, rng.random_range(-1.0..1.0)).unwrap()
}

/// Center in `[-2, 2]^n`, half-widths log-uniform in `[1e-3, 1]`.
pub fn random_box(rng: &mut ChaCha8Rng, input: usize) -> Hyperbox {
    let center = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
    let delta = (0..input).map(|_| 10f64.powf(rng.random_range(-3.0..0.0))).collect();
    Hyperbox::new(center, delta).unwrap()
}

pub fn sample_in(rng: &mut ChaCha8Rng, b: &Hyperbox) -> Vec<f64> {
    b.center.iter().zip(&b.delta).map(|(c, d)| c + d * rng.random_range(-1.0..=1.0)).collect()
}

/// Corners of the box plus `n` uniform interior points.
pub fn probes(rng: &mut ChaCha8Rng, b: &Hyperbox, n: usize) -> Vec<Vec<f64>> {
    let d = b.dim();
    let mut out: Vec<Vec<f64>> = (0..1usize << d)
        .map(|m| (0..d).map(|i| if m >> i & 1 == 1 { b.center[i] + b.delta[i] } else { b.center[i] - b.delta[i] }).collect())
        .collect();
    out.extend((0..n).map(|_| sample_in(rng, b)));
    out
}

/// `nets` random networks and boxes with `samples` interior points each; returns the number of points checked.
pub fn bound_soundness(seed: u64, nets: usize, samples: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for case in 0..nets {
        let input = rng.random_range(1..=4);
        let hidden = rng.random_range(1..=64);
        let scale = rng.random_range(0.1..3.0);
        let net = random_net(&mut rng, input, hidden, scale);
        let b = random_box(&mut rng, input);
        let vb = output_bounds(&net, &b).unwrap();
        let gb = grad_bounds(&net, &b).unwrap();
        for x in probes(&mut rng, &b, samples) {
            let v = net.eval(&x).unwrap();
            if !vb.contains(v) {
                return Err(format!("case {case}: B = {v} outside {vb:?}"));
            }
            for (g, bi) in net.grad(&x).unwrap().iter().zip(&gb) {
                if !bi.contains(*g) {
                    return Err(format!("case {case}: dB = {g} outside {bi:?}"));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}

/// `dB/dx` against central differences with step 1e-5.
pub fn input_gradient(seed: u64, instances: usize, rel: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    for case in 0..instances {
        let input = rng.random_range(1..=4);
        let net = BarrierNet::random(input, rng.random_range(1..=64), &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = net.grad(&x).unwrap();
        for i in 0..input {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (net.eval(&p).unwrap() - net.eval(&m).unwrap()) / (2.0 * h);
            if !close(g[i], fd, rel, 1e-9) {
                return Err(format!("case {case}, dB/dx{i}: analytic {} vs fd {fd}", g[i]));
            }
        }
    }
    Ok(())
}

fn points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
}

/// Parameter gradient of the margin loss against central differences with step 1e-6.
pub fn loss_gradient(seed: u64, instances: usize, rel: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    for case in 0..instances {
        let dim = rng.random_range(1..=3);
        let mut net = BarrierNet::random(dim, rng.random_range(2..=16), &mut rng);
        let safe = points(&mut rng, 12, dim);
        let unsafe_ = points(&mut rng, 12, dim);
        let transitions: Vec<Transition> = safe
            .iter()
            .map(|s| Transition { s: s.clone(), s_next: s.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect(), dt: 0.05 })
            .collect();
        let data = BarrierData { safe: &safe, unsafe_: &unsafe_, transitions: &transitions };
        let cfg = BarrierLossConfig { gamma: rng.random_range(0.1..2.0), ..Default::default() };
        let m = Margins { value: 0.05, lie: rng.random_range(0.0..1.0) };
        let idx: Vec<usize> = (0..12).collect();
        let batch = (&idx[..], &idx[..], &idx[..]);
        let (_, g) = loss_and_grad(&net, data, batch, &cfg, m);
        let p0 = net.params();
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] = p0[k] + h;
            net.set_params(&p).unwrap();
            let up = loss_and_grad(&net, data, batch, &cfg, m).0;
            p[k] = p0[k] - h;
            net.set_params(&p).unwrap();
            let down = loss_and_grad(&net, data, batch, &cfg, m).0;
            net.set_params(&p0).unwrap();
            let fd = (up - down) / (2.0 * h);
            if !close(g[k], fd, rel, 1e-7) {
                return Err(format!("case {case}, param {k}: analytic {} vs fd {fd}", g[k]));
            }
        }
    }
    Ok(())
}

/// `B(x) = tanh(x)` with flow `x' = 1`: positive for `x > 0` and increasing along the flow.
pub fn loss_fixture() -> (BarrierNet, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Transition>) {
    let net = BarrierNet::from_parts(vec![vec![1.0]], vec![0.0], vec![1.0], 0.0).unwrap();
    let safe: Vec<Vec<f64>> = (1..=10).map(|i| vec![0.1 * i as f64]).collect();
    let unsafe_: Vec<Vec<f64>> = (1..=10).map(|i| vec![-0.1 * i as f64]).collect();
    let transitions = safe.iter().map(|s| Transition { s: s.clone(), s_next: vec![s[0] + 0.01], dt: 0.01 }).collect();
    (net, safe, unsafe_, transitions)
}

/// Zero loss on the fixture, and a positive loss after breaking any single sample.
pub fn loss_characterization() -> Check {
    let (net, safe, unsafe_, tr) = loss_fixture();
    let cfg = BarrierLossConfig::default();
    let loss = |s: &[Vec<f64>], u: &[Vec<f64>], t: &[Transition]| barrier_loss(&net, BarrierData { safe: s, unsafe_: u, transitions: t }, &cfg).unwrap();
    let base = loss(&safe, &unsafe_, &tr);
    if base != 0.0 {
        return Err(format!("loss {base} on a satisfying dataset"));
    }
    for i in 0..safe.len() {
        let mut s = safe.clone();
        s[i][0] = -0.3;
        if !(loss(&s, &unsafe_, &tr) > 0.0) {
            return Err(format!("safe sample {i} moved negative left the loss at zero"));
        }
    }
    for i in 0..unsafe_.len() {
        let mut u = unsafe_.clone();
        u[i][0] = 0.3;
        if !(loss(&safe, &u, &tr) > 0.0) {
            return Err(format!("unsafe sample {i} moved positive left the loss at zero"));
        }
    }
    for i in 0..tr.len() {
        let mut t = tr.clone();
        // against the flow fast enough that L_fd B < -gamma B
        t[i].s_next = vec![t[i].s[0] - 0.02];
        if !(loss(&safe, &unsafe_, &t) > 0.0) {
            return Err(format!("reversed transition {i} left the loss at zero"));
        }
    }
    Ok(())
}

pub fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    let a: f64 = rng.random_range(-5.0..5.0);
    let b: f64 = if rng.random_bool(0.1) { a } else { rng.random_range(-5.0..5.0) };
    Interval::new(a.min(b), a.max(b)).unwrap()
}

/// Minimum of `sum g_i f_i` over all `4^n` endpoint combinations.
pub fn corner_min(g: &[Interval], f: &[Interval]) -> f64 {
    let n = g.len();
    (0..1usize << (2 * n))
        .map(|mask| {
            (0..n)
                .map(|i| {
                    let gi = if mask >> (2 * i) & 1 == 0 { g[i].lo } else { g[i].hi };
                    let fi = if mask >> (2 * i + 1) & 1 == 0 { f[i].lo } else { f[i].hi };
                    gi * fi
                })
                .fold(0.0, |s, t| s + t)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Exact equality of `lie_lower_bound` with corner enumeration for `n <= 3`.
pub fn interval_dot(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(1..=3);
        let g: Vec<Interval> = (0..n).map(|_| random_interval(&mut rng)).collect();
        let f: Vec<Interval> = (0..n).map(|_| random_interval(&mut rng)).collect();
        let (got, want) = (lie_lower_bound(&g, &f).unwrap(), corner_min(&g, &f));
        if got != want {
            return Err(format!("{g:?} . {f:?}: {got} != {want}"));
        }
    }
    Ok(())
}
