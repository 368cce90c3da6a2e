mod common;

use infeasloc::linsolve::{lu_solve, TripletMatrix};
use infeasloc::localizer::assign_enforcers;
use infeasloc::netmodel::{
    from_canonical_json, scale_loading_with, to_canonical_json, ScalingMode,
};
use proptest::prelude::*;

fn modes() -> impl Strategy<Value = ScalingMode> {
    prop_oneof![
        Just(ScalingMode::LoadsOnly),
        Just(ScalingMode::LoadsAndGeneration)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_composes(a in 0.1f64..3.0, b in 0.1f64..3.0, mode in modes()) {
        let net = common::case14(1.0);
        let twice = scale_loading_with(&scale_loading_with(&net, a, mode).unwrap(), b, mode).unwrap();
        let once = scale_loading_with(&net, a * b, mode).unwrap();
        prop_assert!((twice.alpha - once.alpha).abs() <= 1e-12 * once.alpha);
        for (l, m) in twice.loads.iter().zip(&once.loads) {
            prop_assert!((l.p - m.p).abs() <= 1e-12 * (1.0 + m.p.abs()));
            prop_assert!((l.q - m.q).abs() <= 1e-12 * (1.0 + m.q.abs()));
        }
        for (g, h) in twice.generators.iter().zip(&once.generators) {
            prop_assert!((g.p_set - h.p_set).abs() <= 1e-12 * (1.0 + h.p_set.abs()));
        }
    }

    #[test]
    fn loads_only_leaves_generation(a in 0.1f64..3.0) {
        let net = common::case14(1.0);
        let scaled = scale_loading_with(&net, a, ScalingMode::LoadsOnly).unwrap();
        prop_assert_eq!(&scaled.generators, &net.generators);
        prop_assert_eq!(&scaled.branches, &net.branches);
    }

    #[test]
    fn enforcers_mark_exactly_k_largest(
        mags in prop::collection::vec(0.0f64..1.0, 1..40),
        k in 1usize..50,
    ) {
        let e = assign_enforcers(&mags, k, 1.0, 1e-3).unwrap();
        let k = k.min(mags.len());
        prop_assert_eq!(e.major().len(), k);
        prop_assert!(e.major().windows(2).all(|w| w[0] < w[1]));
        let low: Vec<usize> = (0..mags.len()).filter(|&i| e.c[i] == 1e-3).collect();
        prop_assert_eq!(&low, &e.major().to_vec());
        let floor = e.major().iter().map(|&i| mags[i]).fold(f64::INFINITY, f64::min);
        for (m, c) in mags.iter().zip(&e.c) {
            if *c == 1.0 {
                prop_assert!(*m <= floor);
            }
        }
    }

    #[test]
    fn lu_recovers_diagonally_dominant_solution(
        n in 2usize..30,
        off in prop::collection::vec((0usize..30, 0usize..30, -1.0f64..1.0), 0..80),
        seed in prop::collection::vec(-5.0f64..5.0, 30),
    ) {
        let mut t = TripletMatrix::new(n, n);
        for i in 0..n {
            t.push(i, i, 100.0 + i as f64);
        }
        for &(r, c, v) in &off {
            t.push(r % n, c % n, v);
        }
        let a = t.to_csc().unwrap();
        let x_star = &seed[..n];
        let x = lu_solve(&a, &a.mul_vec(x_star)).unwrap();
        for (p, q) in x.iter().zip(x_star) {
            prop_assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn canonical_json_round_trips(alpha in 0.2f64..5.0, mode in modes()) {
        let net = scale_loading_with(&common::case14(1.0), alpha, mode).unwrap();
        let text = to_canonical_json(&net);
        let back = from_canonical_json(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(to_canonical_json(&back), text);
    }
}
