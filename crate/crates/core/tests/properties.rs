use lamperti_lab::coalescent::{simulate_coalescent, Partition};
use lamperti_lab::dual::simulate_dual;
use lamperti_lab::lambda::{LambdaSpec, SMHParams};
use lamperti_lab::lamperti::{
    additive_functional, c_alpha_transform, gamma_alpha_transform, invert_clock, path_distance, MeasurePath,
};
use lamperti_lab::measures::{inverse_log_polar, log_polar, DiscreteMeasure};
use lamperti_lab::rng::stream;
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<(u64, f64)>> {
    proptest::collection::vec((0u64..6, 0.01f64..5.0), 1..8)
}

/// Strictly increasing times from 0 and one positive-mass state per time.
fn paths() -> impl Strategy<Value = MeasurePath> {
    proptest::collection::vec((0.01f64..2.0, atoms()), 2..10).prop_map(|segs| {
        let mut t = 0.0;
        let (mut times, mut states) = (Vec::new(), Vec::new());
        for (dt, a) in segs {
            times.push(t);
            states.push(DiscreteMeasure::from_labels(&a).unwrap());
            t += dt;
        }
        MeasurePath::new(times, states).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_ignores_order_and_splitting(a in atoms(), rot in 0usize..8) {
        let base = DiscreteMeasure::from_labels(&a).unwrap();
        let mut shuffled = a.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        // split every atom in two halves
        let split: Vec<(u64, f64)> = shuffled.iter().flat_map(|&(l, m)| [(l, m / 2.0), (l, m / 2.0)]).collect();
        let other = DiscreteMeasure::from_labels(&split).unwrap();
        prop_assert_eq!(base.atoms().len(), other.atoms().len());
        for (x, y) in base.atoms().iter().zip(other.atoms()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() <= 1e-12 * x.1.max(1.0));
        }
        prop_assert!(base.atoms().windows(2).all(|w| w[0].0 < w[1].0));
        let total: f64 = a.iter().map(|p| p.1).sum();
        prop_assert!((base.total_mass() - total).abs() < 1e-12 * total.max(1.0));
    }

    #[test]
    fn log_polar_inverts(a in atoms()) {
        let mu = DiscreteMeasure::from_labels(&a).unwrap();
        let (rho, xi) = log_polar(&mu).unwrap();
        prop_assert!((xi - mu.total_mass().ln()).abs() < 1e-12);
        let back = inverse_log_polar(&rho, xi);
        for (x, y) in mu.atoms().iter().zip(back.atoms()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-12 * x.1.max(1.0));
        }
    }

    #[test]
    fn lamperti_maps_are_mutually_inverse(path in paths(), alpha in -2.0f64..2.0) {
        let y = c_alpha_transform(&path, alpha).unwrap();
        let x = gamma_alpha_transform(&y, alpha).unwrap();
        prop_assert_eq!(x.states.len(), path.states.len());
        prop_assert!(path_distance(&x, &path) < 1e-10);
        prop_assert!(y.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn clock_is_increasing_and_inverts(path in paths(), alpha in -2.0f64..2.0, u in 0.0f64..1.0) {
        let clock = additive_functional(&path, alpha).unwrap();
        prop_assert!(clock.grid.values.windows(2).all(|w| w[1] > w[0]));
        let t = u * path.horizon();
        let a = clock.value_at(t);
        // independent oracle: sum of m^{-alpha} over segments
        let mut oracle = 0.0;
        for k in 0..path.times.len() - 1 {
            let (t0, t1) = (path.times[k], path.times[k + 1]);
            let len = (t1.min(t) - t0).max(0.0);
            oracle += path.states[k].total_mass().powf(-alpha) * len;
        }
        prop_assert!((a - oracle).abs() < 1e-10 * oracle.max(1.0));
        prop_assert!((invert_clock(&clock, a) - t).abs() < 1e-10 * t.max(1.0));
    }

    #[test]
    fn coalescent_block_counts_never_increase(seed in 0u64..1000, p in 2usize..9, beta in 0.3f64..1.8, sigma in 0.0f64..1.0) {
        let params = SMHParams::new(0.0, sigma, LambdaSpec::beta(beta, 1.0).unwrap()).unwrap();
        let mut rng = stream(seed, 99, 0);
        let path = simulate_coalescent(&Partition::singletons(p), &params, 5.0, &mut rng).unwrap();
        let mut prev = p;
        for e in &path.events {
            prop_assert_eq!(e.blocks_before, prev);
            prop_assert!(e.blocks_after < e.blocks_before);
            prev = e.blocks_after;
        }
        prop_assert_eq!(path.final_partition().num_blocks(), prev);
        let mut last = 0.0;
        for e in &path.events {
            prop_assert!(e.time >= last && e.time <= 5.0);
            last = e.time;
        }
    }

    #[test]
    fn merger_rates_satisfy_consistency(beta in 0.2f64..1.9, j in 2usize..8, i0 in 0usize..8) {
        let spec = LambdaSpec::beta(beta, 1.0).unwrap();
        let i = 2 + i0 % (j - 1);
        let lhs = spec.merger_rate(j, i).unwrap();
        let rhs = spec.merger_rate(j + 1, i).unwrap() + spec.merger_rate(j + 1, i + 1).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn dual_keeps_z_positive_and_blocks_monotone(seed in 0u64..500, p in 2usize..7, z0 in 0.1f64..5.0) {
        let params = SMHParams::new(0.3, 0.5, LambdaSpec::beta(1.2, 1.0).unwrap()).unwrap();
        let mut rng = stream(seed, 98, 0);
        let path = simulate_dual(p, &Partition::singletons(p), z0, &params, 2.0, 1e-3, 0.1, &mut rng).unwrap();
        prop_assert!((path.states[0].z() - z0).abs() < 1e-12 * z0);
        for s in &path.states {
            prop_assert!(s.log_z.is_finite() && s.z() > 0.0);
        }
        prop_assert!(path.states.windows(2).all(|w| w[1].partition.num_blocks() <= w[0].partition.num_blocks()));
    }
}
