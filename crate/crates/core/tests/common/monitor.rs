//! Independent re-simulation oracle for the runtime monitor.

use std::sync::Arc;

use almost_barrier::certify::Hyperbox;
use almost_barrier::geometry::{wrap_angle, Path};
use almost_barrier::monitor::MonitorConfig;
use almost_barrier::obs::{Archive, FeedbackLaw, ObsDim};
use almost_barrier::vehicle::Simulator;

fn inside(b: &Hyperbox, z: &[f64]) -> bool {
    b.center.iter().zip(&b.delta).zip(z).all(|((c, d), x)| (x - c).abs() <= *d)
}

/// `(first_hit, worst_kappa)` for each level state, recomputed by stepping a
/// fresh simulator through the stateful `reset`/`step` interface.
pub fn brute_force_flags(
    sim: &Simulator,
    law: &dyn FeedbackLaw,
    archive: &Archive,
    crash_d_e: f64,
    states: &[Vec<f64>],
    cells: &[Hyperbox],
    cfg: &MonitorConfig,
) -> Vec<Option<(usize, f64)>> {
    let norm = archive.normalizer();
    let spec = archive.spec();
    let keyed: Vec<Vec<f64>> = archive.entries().iter().map(|(o, _)| norm.normalize(o)).collect();
    states
        .iter()
        .map(|z| {
            if cfg.horizon == 0 || cells.is_empty() {
                return None;
            }
            let o0 = norm.denormalize(z);
            let zq = norm.normalize(&o0);
            let mut near = 0;
            let mut best = f64::INFINITY;
            for (i, k) in keyed.iter().enumerate() {
                let d: f64 = k.iter().zip(&zq).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best {
                    best = d;
                    near = i;
                }
            }
            let src = archive.entries()[near].1;
            let mut worst: Option<(usize, f64)> = None;
            for &kappa in &cfg.curvatures {
                let mut s = sim.with_path(Arc::new(Path::constant_curvature(kappa, 5000.0).unwrap()));
                let (mut d_e, mut th, mut vx, mut vy, mut r) = (0.0, 0.0, src.v_x, src.v_y, src.r);
                for (d, v) in spec.dims.iter().zip(&o0) {
                    match d {
                        ObsDim::DistanceError => d_e = *v,
                        ObsDim::HeadingError => th = *v,
                        ObsDim::SpeedX => vx = *v,
                        ObsDim::SpeedY => vy = *v,
                        ObsDim::YawRate => r = *v,
                    }
                }
                let start = s.state_at(1.0, d_e, th, vx, vy, r);
                let hit = if s.reset(start).is_err() {
                    Some(0)
                } else {
                    let mut prev = o0.clone();
                    let mut hit = None;
                    for t in 1..=cfg.horizon {
                        let u = law.act(s.state(), &s.frame());
                        let out = match s.step(u) {
                            Ok(out) if !out.crashed => out,
                            _ => {
                                hit = Some(t);
                                break;
                            }
                        };
                        let mut o = spec.observe(&out.state, &out.frame);
                        for (i, d) in spec.dims.iter().enumerate() {
                            if *d == ObsDim::HeadingError {
                                o[i] = prev[i] + wrap_angle(o[i] - prev[i]);
                            }
                        }
                        if out.frame.d_e.abs() > crash_d_e || cells.iter().any(|c| inside(c, &norm.normalize(&o))) {
                            hit = Some(t);
                            break;
                        }
                        prev = o;
                    }
                    hit
                };
                if let Some(t) = hit {
                    if worst.is_none_or(|(b, _)| t < b) {
                        worst = Some((t, kappa));
                    }
                }
            }
            worst
        })
        .collect()
}
