//! Randomised invariants over graphs, splits, the decomposed dynamics and the
//! formation error geometry.

use proptest::prelude::*;

use privdac::consensus::decomposed_rhs_into;
use privdac::formation::{compute_errors, sine_difference_quotient, unwrap_near, RobotPose};
use privdac::graph::{
    algebraic_connectivity, decomposed_laplacian, predicted_decomposed_lambda2, NetworkGraph,
};
use privdac::rng::SplitMix64;
use privdac::signals::{split, Reference, SignalDescriptor, SplitOptions, Term};

fn graph(seed: u64, n: usize, p: f64) -> NetworkGraph {
    NetworkGraph::random_connected(n, p, &mut SplitMix64::new(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_vanish_and_spectrum_is_nonnegative(seed in any::<u64>(), n in 2usize..9, p in 0.0f64..0.8) {
        let l = graph(seed, n, p).laplacian();
        for s in l.row_sums() {
            prop_assert!(s.abs() < 1e-12);
        }
        let eig = l.eigenvalues().unwrap();
        prop_assert!(eig.iter().all(|e| *e > -1e-10));
        prop_assert!(eig[1] > 1e-9, "connected graph must have a positive gap");
    }

    #[test]
    fn decomposed_gap_follows_closed_form(seed in any::<u64>(), n in 2usize..8, p in 0.0f64..0.8) {
        let l = graph(seed, n, p).laplacian();
        let lambda2 = algebraic_connectivity(&l).unwrap();
        let solved = algebraic_connectivity(&decomposed_laplacian(&l)).unwrap();
        let predicted = predicted_decomposed_lambda2(lambda2);
        prop_assert!((solved - predicted).abs() < 1e-9);
        // The decomposed gap is always below both 1 and the original gap.
        prop_assert!(predicted < 1.0 && predicted < lambda2);
    }

    #[test]
    fn split_preserves_the_reference(
        seed in any::<u64>(),
        r0 in prop::collection::vec(-20.0f64..20.0, 1..4),
        amp in 0.0f64..3.0,
        t in 0.0f64..50.0,
    ) {
        let m = r0.len();
        let rate = SignalDescriptor::new(
            (0..m).map(|d| vec![Term::Cos { amplitude: 0.3 + d as f64, frequency: 0.4, phase: 0.1 }]).collect(),
        ).unwrap();
        let r = Reference::new(r0.clone(), rate.clone()).unwrap();
        let opts = SplitOptions { perturbation_amplitude: amp, ..SplitOptions::default() };
        let s = split(&r, seed, &opts).unwrap();
        let f = rate.value(t);
        let (fa, fb) = (s.alpha.value(t), s.beta.value(t));
        for d in 0..m {
            prop_assert!((s.alpha0[d] + s.beta0[d] - 2.0 * r0[d]).abs() < 1e-12);
            prop_assert!((fa[d] + fb[d] - 2.0 * f[d]).abs() < 1e-12);
            prop_assert!((-10.0..=10.0).contains(&s.alpha0[d]));
        }
        prop_assert_eq!(s, split(&r, seed, &opts).unwrap());
    }

    #[test]
    fn decomposed_coupling_conserves_the_sum(
        seed in any::<u64>(),
        n in 2usize..7,
        kappa in 0.1f64..10.0,
        values in prop::collection::vec(-50.0f64..50.0, 4 * 2 * 7),
    ) {
        let g = graph(seed, n, 0.4);
        let m = 2;
        let len = n * m;
        let (alpha, rest) = values.split_at(len);
        let (beta, rest) = rest.split_at(len);
        let (fa, rest) = rest.split_at(len);
        let fb = &rest[..len];
        let mut da = vec![0.0; len];
        let mut db = vec![0.0; len];
        decomposed_rhs_into(alpha, beta, fa, fb, &g, kappa, m, &mut da, &mut db);
        for d in 0..m {
            let lhs: f64 = (0..n).map(|i| da[i * m + d] + db[i * m + d]).sum();
            let rhs: f64 = (0..n).map(|i| fa[i * m + d] + fb[i * m + d]).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn unwrap_lands_within_half_turn(angle in -100.0f64..100.0, reference in -100.0f64..100.0) {
        let u = unwrap_near(angle, reference);
        prop_assert!((u - reference).abs() <= std::f64::consts::PI + 1e-9);
        let turns = (u - angle) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn error_norm_is_rotation_free(
        x in -10.0f64..10.0, y in -10.0f64..10.0, theta in -7.0f64..7.0,
        cx in -10.0f64..10.0, cy in -10.0f64..10.0,
    ) {
        let pose = RobotPose { s_x: x, s_y: y, theta };
        let e = compute_errors(&pose, [cx, cy], [0.5, -0.5], 0.0);
        let world = (x - cx - 0.5).hypot(y - cy + 0.5);
        prop_assert!((e.e_x.hypot(e.e_y) - world).abs() < 1e-9);
        prop_assert!((e.e_theta - theta).abs() < 1e-15);
    }

    #[test]
    fn sine_quotient_matches_direct_form(a in -3.0f64..3.0, gap in 1e-3f64..2.0) {
        let b = a - gap;
        let direct = (a.sin() - b.sin()) / (a - b);
        prop_assert!((sine_difference_quotient(a, b) - direct).abs() < 1e-9);
        prop_assert!(sine_difference_quotient(a, b).abs() <= 1.0 + 1e-12);
    }
}
