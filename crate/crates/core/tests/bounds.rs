//! Soundness of the value, gradient, and Lie bounds against sampling oracles.

mod common;

use almost_barrier::barrier::BarrierNet;
use almost_barrier::certify::{grad_bounds, lie_lower_bound, output_bounds, propagated_bounds, Hyperbox, Interval};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::checks::{probes, random_box, random_net};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn value_and_gradient_bounds_contain_samples(seed in any::<u64>(), input in 1usize..=4, hidden in 1usize..=64, scale in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, input, hidden, scale);
        let b = random_box(&mut rng, input);
        let vb = output_bounds(&net, &b).unwrap();
        let gb = grad_bounds(&net, &b).unwrap();
        for x in probes(&mut rng, &b, 200) {
            let v = net.eval(&x).unwrap();
            prop_assert!(vb.contains(v), "B = {v} outside {vb:?}");
            for (g, bi) in net.grad(&x).unwrap().iter().zip(&gb) {
                prop_assert!(bi.contains(*g), "dB = {g} outside {bi:?}");
            }
        }
    }

    #[test]
    fn refined_value_bounds_never_exceed_propagation(seed in any::<u64>(), input in 1usize..=4, hidden in 1usize..=64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, input, hidden, 1.0);
        let b = random_box(&mut rng, input);
        prop_assert!(propagated_bounds(&net, &b).unwrap().contains_interval(&output_bounds(&net, &b).unwrap()));
    }

    #[test]
    fn bounds_shrink_with_the_box(seed in any::<u64>(), input in 1usize..=3, hidden in 1usize..=32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, input, hidden, 1.0);
        let outer = random_box(&mut rng, input);
        let inner = Hyperbox::new(outer.center.clone(), outer.delta.iter().map(|d| d * 0.5).collect()).unwrap();
        let (vo, vi) = (propagated_bounds(&net, &outer).unwrap(), propagated_bounds(&net, &inner).unwrap());
        prop_assert!(vo.lo <= vi.lo + 1e-12 && vi.hi <= vo.hi + 1e-12);
    }

    #[test]
    fn lie_lower_bound_is_a_lower_bound(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let iv = |rng: &mut ChaCha8Rng| {
            let (a, b): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            Interval::new(a.min(b), a.max(b)).unwrap()
        };
        let g: Vec<Interval> = (0..n).map(|_| iv(&mut rng)).collect();
        let f: Vec<Interval> = (0..n).map(|_| iv(&mut rng)).collect();
        let lo = lie_lower_bound(&g, &f).unwrap();
        for _ in 0..100 {
            let dot: f64 = g.iter().zip(&f).map(|(a, b)| rng.random_range(a.lo..=a.hi) * rng.random_range(b.lo..=b.hi)).sum();
            prop_assert!(dot >= lo - 1e-12);
        }
    }
}

#[test]
fn spec_examples_for_one_neuron() {
    let net = BarrierNet::from_parts(vec![vec![1.0]], vec![0.0], vec![1.0], 0.0).unwrap();
    let b = Hyperbox::new(vec![1.5], vec![0.5]).unwrap();
    let g = grad_bounds(&net, &b).unwrap()[0];
    let sech2 = |x: f64| 1.0 / x.cosh().powi(2);
    assert!((g.lo - sech2(2.0)).abs() < 1e-9 && (g.hi - sech2(1.0)).abs() < 1e-9);
    assert!((g.lo - 0.070651).abs() < 1e-6 && (g.hi - 0.419974).abs() < 1e-6);
    let point = Hyperbox::new(vec![0.3], vec![0.0]).unwrap();
    let v = output_bounds(&net, &point).unwrap();
    assert!(v.contains(0.3f64.tanh()) && v.width() < 1e-9);
}
