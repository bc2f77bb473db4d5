use std::collections::BTreeMap;

use ecc_core::engine::run_ecc;
use ecc_core::params::{Conditioning, ModelConfig};
use ecc_core::schedule::{Schedule, StateIndex};
use ecc_core::sim::simulate;
use ecc_core::{compute_metrics, make_event, DerivedModel, EventKind};
use proptest::prelude::*;

fn small_model() -> impl Strategy<Value = DerivedModel> {
    (1u32..=3, 1u8..=2, 0u8..=1, 0u8..=2, 0u8..=1, any::<bool>()).prop_map(
        |(n, min_be, extra_be, backoffs, retries, one_step)| {
            let mut cfg = ModelConfig::new(n).with_mac(min_be, min_be + extra_be, backoffs, retries);
            if one_step {
                cfg.conditioning = Conditioning::OneStep;
            }
            cfg.derive().unwrap()
        },
    )
}

fn mac_model() -> impl Strategy<Value = DerivedModel> {
    (1u8..=4, 0u8..=2, 0u8..=3, 0u8..=3).prop_map(|(min_be, extra, backoffs, retries)| {
        ModelConfig::new(2)
            .with_mac(min_be, min_be + extra, backoffs, retries)
            .derive()
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn omega_inverts_lambda(m in mac_model()) {
        let sched = Schedule::new(&m);
        let d_bp = m.timing().d_bp;
        for j in 1..=m.t_max {
            for i in 1..=m.b_max {
                let s = StateIndex::new(i, j);
                if i == 1 && j == 1 {
                    continue;
                }
                let lam = sched.lambda(s);
                let hi = lam.max().unwrap() + 3 * d_bp;
                for t in (0..=hi).step_by(d_bp as usize) {
                    let om = sched.omega(t, s);
                    prop_assert_eq!(lam.contains(t), !om.is_empty(), "t={} s={}", t, s);
                    let preds: Vec<StateIndex> = if i >= 2 {
                        vec![StateIndex::new(i - 1, j)]
                    } else {
                        (1..=m.b_max).map(|k| StateIndex::new(k, j - 1)).collect()
                    };
                    for p in om.iter() {
                        prop_assert!(preds.iter().any(|&q| sched.lambda(q).contains(p)));
                        prop_assert!(p < t);
                    }
                }
            }
        }
    }

    #[test]
    fn lambda_is_aligned_and_bounded(m in mac_model()) {
        let sched = Schedule::new(&m);
        let d_bp = m.timing().d_bp;
        for j in 1..=m.t_max {
            for i in 1..=m.b_max {
                let lam = sched.lambda(StateIndex::new(i, j));
                prop_assert!(!lam.is_empty());
                prop_assert!(lam.iter().all(|t| t % d_bp == 0));
                if i >= 2 {
                    let prev = sched.lambda(StateIndex::new(i - 1, j));
                    prop_assert!(lam.min().unwrap() > prev.min().unwrap());
                    prop_assert!(lam.max().unwrap() > prev.max().unwrap());
                }
            }
        }
    }

    #[test]
    fn events_are_monotone_in_start(k in 0u64..500, gap in 1u64..50) {
        let m = ModelConfig::new(5).derive().unwrap();
        let d_bp = m.timing().d_bp;
        for kind in [EventKind::Success, EventKind::Failure] {
            let a = make_event(&m, kind, k * d_bp);
            let b = make_event(&m, kind, (k + gap) * d_bp);
            prop_assert!(a.finish > a.start);
            prop_assert!(b.finish > a.finish);
            prop_assert_eq!(a.finish - a.start, b.finish - b.start);
            prop_assert_eq!(a.finish % d_bp, 0);
        }
        let s = make_event(&m, EventKind::Success, k * d_bp);
        let f = make_event(&m, EventKind::Failure, k * d_bp);
        prop_assert!(s.finish > f.finish);
    }

    #[test]
    fn exhaustive_run_is_normalised(m in small_model()) {
        let out = run_ecc::<f64>(&m).unwrap();
        prop_assert!((out.coverage() - 1.0).abs() < 1e-9);
        prop_assert!(out.stats.max_conservation_error < 1e-9);
        prop_assert!(out.stats.max_residual_error < 1e-6);
        prop_assert!(out.chains.iter().all(|c| c.prob > 0.0));
    }

    #[test]
    fn pdf_mass_equals_expected_deliveries(m in small_model()) {
        let out = run_ecc::<f64>(&m).unwrap();
        let r = compute_metrics(&m, &out.chains, 0.0).unwrap();
        let pdf_total: f64 = r.latency_pdf.values().sum();
        let expected: f64 = out.chains.iter().map(|c| c.prob * c.n_success() as f64).sum();
        prop_assert!((pdf_total - expected).abs() < 1e-9);
        prop_assert!(r.delivery_ratio >= 0.0 && r.delivery_ratio <= 1.0 + 1e-12);
        let d_bp = m.timing().d_bp;
        let span = m.grid.success_len * d_bp;
        prop_assert!(r.latency_pdf.keys().all(|&t| t >= span && (t - span) % d_bp == 0));
    }

    #[test]
    fn simulator_ignores_thread_count(n in 1u32..=6, seed in any::<u64>()) {
        let m = ModelConfig::new(n).derive().unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate(&m, 9000, seed, true))
        };
        let a = run(1);
        let b = run(3);
        prop_assert_eq!(a.delivery_ratio, b.delivery_ratio);
        prop_assert_eq!(a.latency_mean, b.latency_mean);
        prop_assert_eq!(a.energy_total, b.energy_total);
        prop_assert_eq!(a.histogram, b.histogram);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pruning_keeps_a_subset(n in 3u32..=6, lo in 4i32..=6, step in 1i32..=2) {
        let theta_lo = 10f64.powi(-lo - step);
        let theta_hi = 10f64.powi(-lo);
        let run = |theta| {
            let m = ModelConfig::new(n).with_theta(theta).derive().unwrap();
            run_ecc::<f64>(&m).unwrap()
        };
        let fine = run(theta_lo);
        let coarse = run(theta_hi);
        prop_assert!(coarse.coverage() <= fine.coverage() + 1e-12);
        prop_assert!(coarse.chains.len() <= fine.chains.len());
        let fine_map: BTreeMap<_, _> = fine.chains.iter().map(|c| (c.events(), c.prob)).collect();
        for c in &coarse.chains {
            prop_assert_eq!(fine_map.get(&c.events()).copied(), Some(c.prob));
        }
    }

    #[test]
    fn worker_count_does_not_change_results(n in 2u32..=8, workers in 2usize..=4) {
        let run = |w| {
            let m = ModelConfig::new(n).with_theta(1e-5).with_workers(w).derive().unwrap();
            run_ecc::<f64>(&m).unwrap().chains
        };
        let one = run(1);
        let many = run(workers);
        prop_assert_eq!(one.len(), many.len());
        for (a, b) in one.iter().zip(&many) {
            prop_assert_eq!(a.events(), b.events());
            prop_assert_eq!(a.prob.to_bits(), b.prob.to_bits());
            prop_assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        }
    }
}
