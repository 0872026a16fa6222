use ergograph::bounds::{chebyshev_bound, dominance_violations, estimator_psd, node_variance};
use ergograph::distributed::simulate_diffusion;
use ergograph::estimators::{diffusion_weights, graph_shift_average};
use ergograph::graphs::{adjacency_shift, erdos_renyi, Graph, GraphDocument, ShiftOperator};
use ergograph::seeds::{derive, rng_from_seed};
use ergograph::spectral::{decompose, gft, igft, real_part, SpectralDecomposition};
use nalgebra::DVector;
use proptest::prelude::*;

fn er_instance(n: usize, p: f64, seed: u64) -> (Graph, ShiftOperator, SpectralDecomposition) {
    let g = erdos_renyi(n, p, &mut rng_from_seed(seed)).unwrap();
    let s = adjacency_shift(&g).unwrap();
    let d = decompose(&s).unwrap();
    (g, s, d)
}

fn signal(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0f64..10.0, n).prop_map(DVector::from_vec)
}

/// A graph size together with a signal on it.
fn sized_signal(lo: usize, hi: usize) -> impl Strategy<Value = (usize, DVector<f64>)> {
    (lo..=hi).prop_flat_map(|n| (Just(n), signal(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn perron_direction_is_a_fixed_point(n in 5usize..30, seed: u64, c in -5.0f64..5.0, depth in 1usize..40) {
        let (_, s, d) = er_instance(n, 0.5, seed);
        let x = d.perron_vector() * c;
        let est = graph_shift_average(&s, d.lambda1(), &x, depth).unwrap();
        prop_assert!((est - &x).amax() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn shift_average_is_linear((n, x) in sized_signal(5, 25), seed: u64, a in -3.0f64..3.0) {
        let (_, s, d) = er_instance(n, 0.5, seed);
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        let lhs = graph_shift_average(&s, d.lambda1(), &(&x * a + &y), n).unwrap();
        let rhs = graph_shift_average(&s, d.lambda1(), &x, n).unwrap() * a
            + graph_shift_average(&s, d.lambda1(), &y, n).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + x.amax()));
    }

    #[test]
    fn distributed_is_bit_identical((n, x) in sized_signal(3, 30), seed: u64, depth in 1usize..35) {
        let (g, s, d) = er_instance(n, 0.4, seed);
        let central = graph_shift_average(&s, d.lambda1(), &x, depth).unwrap();
        let trace = simulate_diffusion(&g, &s, d.lambda1(), &x, depth).unwrap();
        prop_assert_eq!(trace.per_node_estimates, central);
        prop_assert_eq!(trace.messages_sent, ((depth - 1) * g.directed_edge_count()) as u64);
    }

    #[test]
    fn estimator_psd_is_dominated(
        n in 4usize..25,
        seed: u64,
        depth in 1usize..30,
        raw in prop::collection::vec(0.0f64..100.0, 25),
    ) {
        let (_, _, d) = er_instance(n, 0.5, seed);
        let p = DVector::from_iterator(n, raw.into_iter().take(n));
        let q = estimator_psd(&p, d.eigenvalues(), d.lambda1(), depth).unwrap();
        prop_assert!((q[0] - p[0]).abs() <= 1e-12 * (1.0 + p[0]));
        prop_assert_eq!(dominance_violations(&p, &q, &d).unwrap().total(), 0);
        for k in 0..n {
            let v = node_variance(&q, &d, k).unwrap();
            prop_assert!(v >= -1e-12);
            prop_assert!(v <= node_variance(&p, &d, k).unwrap() * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn deeper_diffusion_never_hurts(n in 4usize..20, seed: u64, depth in 1usize..20) {
        let (_, _, d) = er_instance(n, 0.5, seed);
        let p = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let shallow = estimator_psd(&p, d.eigenvalues(), d.lambda1(), depth).unwrap();
        let deep = estimator_psd(&p, d.eigenvalues(), d.lambda1(), depth + 1).unwrap();
        // Nonnegative spectra only: a negative eigenvalue makes the sum oscillate.
        for i in 1..n {
            if d.eigenvalues()[i].re >= 0.0 {
                prop_assert!(deep[i] <= shallow[i] * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn gft_round_trip_and_parseval((n, x) in sized_signal(3, 30), seed: u64) {
        let (_, _, d) = er_instance(n, 0.5, seed);
        let xt = gft(&d, &x).unwrap();
        prop_assert!((xt.norm() - x.norm()).abs() <= 1e-10 * (1.0 + x.norm()));
        let back = real_part(&igft(&d, &xt).unwrap(), 1e-9).unwrap();
        prop_assert!((back - &x).amax() <= 1e-10 * (1.0 + x.amax()));
    }

    #[test]
    fn graph_json_round_trip(n in 2usize..40, seed: u64) {
        let g = erdos_renyi(n, 0.5, &mut rng_from_seed(seed)).unwrap();
        let (back, shift) = GraphDocument::from_json(&g.to_json()).unwrap().into_parts().unwrap();
        prop_assert!(shift.is_none());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.n(), g.n());
    }
}

proptest! {
    #[test]
    fn diffusion_weights_lie_in_the_unit_interval(lambda1 in 0.01f64..100.0, depth in 1usize..200) {
        let w = diffusion_weights(lambda1, depth);
        prop_assert_eq!(w.len(), depth - 1);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(w[..w.len().min(10)].iter().all(|&v| v > 0.0));
        prop_assert!(w.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn clipped_bound_is_a_probability(variance in 0.0f64..1e6, eps in 1e-3f64..1e3) {
        let b = chebyshev_bound(variance, eps).unwrap();
        prop_assert_eq!(b.clipped, b.raw.min(1.0));
        prop_assert!((0.0..=1.0).contains(&b.clipped));
    }

    #[test]
    fn seed_paths_do_not_collide(master: u64, a in 0u64..1000, b in 0u64..1000) {
        prop_assert_eq!(derive(master, &[a, b]), derive(master, &[a, b]));
        if a != b {
            prop_assert_ne!(derive(master, &[a]), derive(master, &[b]));
            prop_assert_ne!(derive(master, &[a, b]), derive(master, &[b, a]));
        }
    }
}
