//! The estimated flow enclosure of a small cell contains the one-step flow
//! at densely sampled states of the same cell.

use std::sync::Arc;

use almost_barrier::certify::{dynamics_bounds, DynamicsBoundConfig, Hyperbox};
use almost_barrier::controllers::Stanley;
use almost_barrier::geometry::Path;
use almost_barrier::obs::FullStateLoop;
use almost_barrier::vehicle::{finite_diff_flow, ModelKind, SimConfig, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(model: ModelKind, v: f64, seed: u64) {
    let cfg = SimConfig { model, ..Default::default() };
    let sim = Simulator::new(cfg.clone(), Arc::new(Path::oval(100.0, 50.0).unwrap())).unwrap();
    let law = Stanley { k: 1.0, k_v: 1.0, v_target: v, limits: cfg.limits };
    let sys = FullStateLoop { sim: &sim, law: &law };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let s = rng.random_range(0.0..sim.path().length());
        let vy = if model == ModelKind::Dynamic { rng.random_range(-0.2..0.2) } else { 0.0 };
        let r = if model == ModelKind::Dynamic { rng.random_range(-0.1..0.1) } else { 0.0 };
        let c = sim.state_at(s, rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2), v, vy, r).to_array().to_vec();
        let mut delta = vec![0.02, 0.02, 0.005, 0.1, 0.0, 0.0];
        if model == ModelKind::Dynamic {
            delta[4] = 0.02;
            delta[5] = 0.005;
        }
        let b = Hyperbox::new(c.clone(), delta.clone()).unwrap();
        let enc = dynamics_bounds(&sys, &b, &DynamicsBoundConfig::default()).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = c.iter().zip(&delta).map(|(c, d)| if *d > 0.0 { c + rng.random_range(-d..*d) } else { *c }).collect();
            let f = finite_diff_flow(&sys, &x).unwrap();
            for (i, (fi, e)) in f.iter().zip(&enc).enumerate() {
                assert!(e.lo <= *fi && *fi <= e.hi, "{model:?} dim {i}: {fi} outside [{}, {}]", e.lo, e.hi);
            }
        }
    }
}

#[test]
fn kinematic_enclosure_contains_sampled_flow() {
    check(ModelKind::Kinematic, 20.0, 1);
}

#[test]
fn dynamic_enclosure_contains_sampled_flow() {
    check(ModelKind::Dynamic, 10.0, 2);
}
