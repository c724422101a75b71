use ddvi::deflation::{self, SchurSource};
use ddvi::envs::{self, GarnetParams};
use ddvi::harness;
use ddvi::linalg;
use ddvi::mdp::{self, PolicyInducedChain};
use ddvi::solvers::{self, StopRule, TraceRecord};
use ddvi::spectra;
use ddvi::td;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn garnet_chain(n: usize, branching: usize, seed: u64) -> PolicyInducedChain {
    let (m, pol) = envs::build_garnet(&GarnetParams {
        n_states: n,
        n_actions: 2,
        branching: branching.min(n),
        n_reward_states: 1,
        seed,
    })
    .unwrap();
    mdp::induce_chain(&m, &pol).unwrap()
}

fn eigenvalue_set() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, any::<bool>()), 1..12).prop_map(|raw| {
        raw.into_iter()
            .flat_map(|(re, im, pair)| {
                if pair && im.abs() > 1e-3 {
                    vec![Complex64::new(re, im), Complex64::new(re, -im)]
                } else {
                    vec![Complex64::new(re, 0.0)]
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sorted_spectrum_is_ordered_with_adjacent_pairs(eigs in eigenvalue_set()) {
        let sorted = spectra::sort_spectrum(&eigs);
        prop_assert_eq!(sorted.len(), eigs.len());
        for w in sorted.windows(2) {
            prop_assert!(w[0].norm() >= w[1].norm() - 1e-12);
        }
        for (i, z) in sorted.iter().enumerate().filter(|(_, z)| z.im > 0.0) {
            prop_assert!(i + 1 < sorted.len());
            prop_assert_eq!(sorted[i + 1], z.conj());
        }
    }

    #[test]
    fn resolvent_matches_an_independent_solve(
        n in 3usize..20,
        branching in 1usize..5,
        seed in any::<u64>(),
        rank in 1usize..6,
        c in 0.0f64..0.999,
    ) {
        let chain = garnet_chain(n, branching, seed);
        let s = deflation::conjugate_adjusted_rank(&chain.p_pi, rank.min(n - 1)).unwrap();
        let e = deflation::build_schur(&chain.p_pi, s, SchurSource::Dense);
        prop_assume!(e.is_ok());
        let e = e.unwrap();
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin() * 10.0).collect();
        let closed = e.apply_resolvent(c, &w).unwrap();
        let dense = e.assemble().0;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - c * dense.row(i)[j]);
        let direct = a.lu().solve(&DVector::from_vec(w)).unwrap();
        prop_assert!(linalg::sup_dist(&closed, direct.as_slice()) <= 1e-9);
    }

    #[test]
    fn resolvent_inverts_the_reset(n in 3usize..20, seed in any::<u64>(), alpha in 0.1f64..=1.0) {
        let chain = garnet_chain(n, 2, seed);
        let s = deflation::conjugate_adjusted_rank(&chain.p_pi, 2.min(n - 1)).unwrap();
        let e = deflation::build_schur(&chain.p_pi, s, SchurSource::Dense);
        prop_assume!(e.is_ok());
        let e = e.unwrap();
        let ag = alpha * 0.99;
        let v: Vec<f64> = (0..n).map(|i| i as f64 - 4.0).collect();
        let ev = e.apply(&v).unwrap();
        let w: Vec<f64> = v.iter().zip(&ev).map(|(a, b)| a - ag * b).collect();
        prop_assert!(linalg::sup_dist(&e.apply_resolvent(ag, &w).unwrap(), &v) <= 1e-9);
    }

    #[test]
    fn ddvi_without_deflation_is_value_iteration(n in 2usize..25, seed in any::<u64>(), steps in 1usize..60) {
        let chain = garnet_chain(n, 3, seed);
        let stop = StopRule::residual(0.0, steps);
        let v0 = vec![0.5; n];
        let a = solvers::vi_pe(&chain, 0.95, &v0, &stop).unwrap();
        let b = solvers::ddvi(&chain, 0.95, &deflation::DeflationMatrix::empty(n), 1.0, &v0, &stop).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.final_v), bits(&b.final_v));
    }

    #[test]
    fn stepsize_bound_does_not_grow_with_rank(eigs in eigenvalue_set(), gamma in 0.0f64..0.999) {
        let sorted = spectra::sort_spectrum(&eigs);
        let n = sorted.len();
        let bounds: Vec<f64> = (0..n).map(|s| td::ddtd_stepsize_lower_bound(&sorted, s, gamma, n).unwrap()).collect();
        for w in bounds.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn smoothing_keeps_a_distribution_on_the_support(
        weights in prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 1..15),
        theta in 0.0f64..=1.0,
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 0.0);
        let row: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let (out, flagged) = td::smooth_model(&row, theta).unwrap();
        prop_assert!(!flagged);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (p, q) in row.iter().zip(&out) {
            prop_assert!(*q >= 0.0);
            prop_assert_eq!(*p == 0.0, *q == 0.0);
        }
    }

    #[test]
    fn trace_csv_round_trips(
        rows in prop::collection::vec((0usize..10_000, 0usize..5000, 0.0f64..10.0, 0.0f64..100.0, 0.0f64..5.0), 0..40),
    ) {
        let records: Vec<TraceRecord> = rows
            .iter()
            .map(|&(iteration, shift, norm_err_l1, sup_err, wallclock_s)| TraceRecord {
                iteration,
                cost_index: iteration + shift,
                norm_err_l1,
                sup_err,
                wallclock_s,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        harness::write_trace_csv(&path, &records).unwrap();
        prop_assert_eq!(harness::read_trace_csv(&path).unwrap(), records);
    }
}
