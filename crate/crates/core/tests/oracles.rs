//! Chain engine against the exhaustive enumerator and the simulator.

use std::collections::BTreeMap;

use ecc_core::exact::enumerate_exact;
use ecc_core::params::{Conditioning, ModelConfig};
use ecc_core::protocol::NodeResult;
use ecc_core::sim::{simulate, simulate_once};
use ecc_core::{compute_metrics, run_ecc, DerivedModel, Event, EventKind, ExactProb, Scalar};
use num_rational::BigRational;
use num_traits::{One, Zero};

fn tiny(n: u32, min_be: u8, max_be: u8, backoffs: u8, retries: u8) -> DerivedModel {
    ModelConfig::new(n)
        .with_mac(min_be, max_be, backoffs, retries)
        .derive()
        .unwrap()
}

fn ecc_distribution(m: &DerivedModel) -> BTreeMap<Vec<Event>, ExactProb> {
    run_ecc::<ExactProb>(m)
        .unwrap()
        .chains
        .into_iter()
        .map(|c| (c.events(), c.prob))
        .collect()
}

fn exact_distribution(m: &DerivedModel) -> BTreeMap<Vec<Event>, ExactProb> {
    enumerate_exact::<ExactProb>(m)
        .unwrap()
        .outcomes
        .into_iter()
        .map(|o| (o.events, o.prob))
        .collect()
}

#[test]
fn matches_enumerator_on_small_grid() {
    for conditioning in [Conditioning::Lookahead, Conditioning::OneStep] {
        for min_be in [1u8, 2] {
            for backoffs in [0u8, 1] {
                for retries in [0u8, 1] {
                    let mut cfg = ModelConfig::new(2).with_mac(min_be, min_be + 1, backoffs, retries);
                    cfg.conditioning = conditioning;
                    let m = cfg.derive().unwrap();
                    assert_eq!(
                        ecc_distribution(&m),
                        exact_distribution(&m),
                        "{conditioning} W1={} B={} T={}",
                        m.w1(),
                        m.b_max,
                        m.t_max
                    );
                }
            }
        }
    }
}

#[test]
fn matches_enumerator_with_three_nodes_when_one_dimension_is_trivial() {
    for (backoffs, retries) in [(1u8, 0u8), (0, 1), (2, 0)] {
        let m = tiny(3, 2, 3, backoffs, retries);
        assert_eq!(ecc_distribution(&m), exact_distribution(&m));
    }
}

#[test]
fn two_nodes_single_stage_hand_count() {
    // W = 8, no deferral stage, no retry: the later CCA always lands in the
    // first frame's busy period
    let m = tiny(2, 3, 3, 0, 0);
    let d = enumerate_exact::<ExactProb>(&m).unwrap();
    assert_eq!(d.leaves, 64);
    let mut by_delivered = [BigRational::zero(), BigRational::zero(), BigRational::zero()];
    for o in &d.outcomes {
        let s = o.events.iter().filter(|e| e.kind == EventKind::Success).count();
        by_delivered[s] = &by_delivered[s] + &o.prob;
    }
    assert_eq!(by_delivered[0], BigRational::new(8.into(), 64.into()));
    assert_eq!(by_delivered[1], BigRational::new(56.into(), 64.into()));
    assert!(by_delivered[2].is_zero());
    assert_eq!(ecc_distribution(&m), exact_distribution(&m));
}

#[test]
fn single_node_closed_form() {
    let m = ModelConfig::new(1).derive().unwrap();
    let out = run_ecc::<ExactProb>(&m).unwrap();
    assert_eq!(out.chains.len(), 8);
    assert!(out.coverage().is_one());
    let r = compute_metrics(&m, &out.chains, 0.0).unwrap();
    assert_eq!(r.delivery_ratio, 1.0);
    // mean start slot 3.5, frame 320 symbols
    assert!((r.latency_mean - (3.5 * 20.0 + 320.0) * 16e-6).abs() < 1e-15);
}

#[test]
fn simulator_frequencies_match_enumerator() {
    let m = tiny(2, 2, 3, 1, 1);
    let exact = enumerate_exact::<f64>(&m).unwrap();
    let runs = 200_000u64;
    let sim = simulate(&m, runs, 11, true);
    let hist = sim.histogram.unwrap();
    let mut seen = 0u64;
    for o in &exact.outcomes {
        let key: Vec<_> = o.events.iter().map(|e| (e.kind, e.start)).collect();
        let count = hist.get(&key).copied().unwrap_or(0);
        seen += count;
        let p = o.prob;
        let sd = (p * (1.0 - p) / runs as f64).sqrt();
        let freq = count as f64 / runs as f64;
        assert!(
            (freq - p).abs() <= 4.0 * sd + 1e-12,
            "{key:?}: freq {freq} vs p {p}"
        );
    }
    assert_eq!(seen, runs, "simulator produced an outcome the enumerator lacks");
}

#[test]
fn exact_delivery_ratio_equals_simulated_per_node_results() {
    let m = tiny(3, 2, 3, 1, 0);
    let exact = enumerate_exact::<f64>(&m).unwrap();
    let r = compute_metrics(&m, &exact.to_chains(), 0.0).unwrap();
    let runs = 100_000u64;
    let mut delivered = 0u64;
    for run in 0..runs {
        let o = simulate_once(&m, 5, run);
        delivered += o
            .results
            .iter()
            .filter(|r| matches!(r, NodeResult::Delivered(_)))
            .count() as u64;
    }
    let freq = delivered as f64 / (3 * runs) as f64;
    assert!((freq - r.delivery_ratio).abs() < 4.0 * (0.25 / runs as f64).sqrt());
}

#[test]
fn float_and_rational_engines_agree() {
    let m = ModelConfig::new(3).with_mac(2, 3, 2, 1).derive().unwrap();
    let a = run_ecc::<f64>(&m).unwrap();
    let b = run_ecc::<ExactProb>(&m).unwrap();
    assert_eq!(a.chains.len(), b.chains.len());
    for (x, y) in a.chains.iter().zip(&b.chains) {
        assert_eq!(x.events(), y.events());
        assert!((x.prob - y.prob.to_f64()).abs() < 1e-12);
    }
    assert!(b.coverage().is_one());
}
