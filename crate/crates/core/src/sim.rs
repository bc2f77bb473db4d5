//! Monte-Carlo simulation of the protocol with independent replications.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Event, EventKind};
use crate::energy::RadioLedger;
use crate::metrics::MetricsReport;
use crate::params::DerivedModel;
use crate::protocol::{Network, NodeResult};
use crate::scalar::Accumulator;

const CHUNK: u64 = 4096;

/// Event sequence key of the outcome histogram: `(kind, start symbol)`.
pub type OutcomeKey = Vec<(EventKind, u64)>;

/// Aggregate of a batch of simulated runs.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub runs: u64,
    pub seed: u64,
    pub n_nodes: usize,
    pub delivery_ratio: f64,
    pub delivery_ratio_se: f64,
    /// Mean latency of delivered packets, seconds.
    pub latency_mean: f64,
    pub latency_mean_se: f64,
    /// Empirical `P(t)`: delivered packets finishing at `t` (symbols) per run.
    pub latency_pdf: BTreeMap<u64, f64>,
    /// Mean total energy per run, joules.
    pub energy_total: f64,
    pub energy_total_se: f64,
    pub dropped_cca: f64,
    pub dropped_retry: f64,
    /// Mean radio time of all nodes per run, symbols.
    pub ledger: RadioLedger,
    #[serde(skip)]
    pub histogram: Option<BTreeMap<OutcomeKey, u64>>,
    pub wall_time: f64,
}

impl SimReport {
    /// Table-style view: coverage is 1 and the chain count is the number of
    /// runs.
    pub fn to_metrics(&self, theta: f64) -> MetricsReport {
        MetricsReport {
            n_nodes: self.n_nodes,
            theta,
            coverage: 1.0,
            delivery_ratio: self.delivery_ratio,
            latency_pdf: self.latency_pdf.clone(),
            latency_mean: self.latency_mean,
            energy_total: self.energy_total,
            chain_count: self.runs,
            wall_time: self.wall_time,
        }
    }
}

/// One replication.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub events: Vec<Event>,
    pub results: Vec<NodeResult>,
    pub ledgers: Vec<RadioLedger>,
    pub energy: f64,
}

/// Seed of run `run` under master seed `seed`.
fn run_seed(seed: u64, run: u64) -> u64 {
    let mut z = seed ^ run.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates one replication with its own random stream.
pub fn simulate_once(model: &DerivedModel, seed: u64, run: u64) -> SimOutcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(run_seed(seed, run));
    let mut net = Network::new(model);
    loop {
        while let Some(d) = net.pending_draw() {
            net.apply_draw(d.node, rng.gen_range(0..d.window));
        }
        if !net.step() {
            break;
        }
    }
    let ledgers = net.ledgers();
    let energy = net.energy();
    let results = net.results().into_iter().map(|r| r.expect("finished")).collect();
    SimOutcome {
        events: net.into_events(),
        results,
        ledgers,
        energy,
    }
}

#[derive(Default)]
struct Partial {
    r_sum: Accumulator<f64>,
    r_sq: Accumulator<f64>,
    lat_sum: Accumulator<f64>,
    delivered: Accumulator<f64>,
    // for the ratio-estimator variance
    lat_sq: Accumulator<f64>,
    lat_cross: Accumulator<f64>,
    del_sq: Accumulator<f64>,
    e_sum: Accumulator<f64>,
    e_sq: Accumulator<f64>,
    drop_cca: u64,
    drop_retry: u64,
    ledger: RadioLedger,
    pdf: BTreeMap<u64, u64>,
    histogram: Option<BTreeMap<OutcomeKey, u64>>,
}

impl Partial {
    fn merge(&mut self, o: Partial) {
        self.r_sum.add(o.r_sum.value());
        self.r_sq.add(o.r_sq.value());
        self.lat_sum.add(o.lat_sum.value());
        self.delivered.add(o.delivered.value());
        self.lat_sq.add(o.lat_sq.value());
        self.lat_cross.add(o.lat_cross.value());
        self.del_sq.add(o.del_sq.value());
        self.e_sum.add(o.e_sum.value());
        self.e_sq.add(o.e_sq.value());
        self.drop_cca += o.drop_cca;
        self.drop_retry += o.drop_retry;
        self.ledger.add(&o.ledger);
        for (k, v) in o.pdf {
            *self.pdf.entry(k).or_default() += v;
        }
        if let (Some(h), Some(oh)) = (&mut self.histogram, o.histogram) {
            for (k, v) in oh {
                *h.entry(k).or_default() += v;
            }
        }
    }
}

/// Runs `runs` independent replications. Results depend only on
/// `(model, runs, seed)`, not on the thread count.
pub fn simulate(model: &DerivedModel, runs: u64, seed: u64, histogram: bool) -> SimReport {
    assert!(runs >= 1, "at least one run");
    let started = Instant::now();
    let n = model.n_nodes() as f64;
    let sym = model.timing().symbol_duration_s;
    let chunks: Vec<u64> = (0..runs.div_ceil(CHUNK)).collect();
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&c| {
            let mut p = Partial {
                histogram: histogram.then(BTreeMap::new),
                ..Partial::default()
            };
            for run in c * CHUNK..((c + 1) * CHUNK).min(runs) {
                let o = simulate_once(model, seed, run);
                let mut delivered = 0.0;
                let mut lat = 0.0;
                for r in &o.results {
                    match *r {
                        NodeResult::Delivered(f) => {
                            delivered += 1.0;
                            lat += f as f64 * sym;
                            *p.pdf.entry(f).or_default() += 1;
                        }
                        NodeResult::DroppedCca => p.drop_cca += 1,
                        NodeResult::DroppedRetry => p.drop_retry += 1,
                    }
                }
                let r = delivered / n;
                p.r_sum.add(r);
                p.r_sq.add(r * r);
                p.lat_sum.add(lat);
                p.delivered.add(delivered);
                p.lat_sq.add(lat * lat);
                p.lat_cross.add(lat * delivered);
                p.del_sq.add(delivered * delivered);
                p.e_sum.add(o.energy);
                p.e_sq.add(o.energy * o.energy);
                for l in &o.ledgers {
                    p.ledger.add(l);
                }
                if let Some(h) = &mut p.histogram {
                    let key = o.events.iter().map(|e| (e.kind, e.start)).collect();
                    *h.entry(key).or_default() += 1;
                }
            }
            p
        })
        .collect();
    let mut total = Partial {
        histogram: histogram.then(BTreeMap::new),
        ..Partial::default()
    };
    for p in partials {
        total.merge(p);
    }

    let k = runs as f64;
    let mean_se = |sum: f64, sq: f64| {
        let mean = sum / k;
        let var = if runs > 1 {
            ((sq - k * mean * mean) / (k - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / k).sqrt())
    };
    let (r, r_se) = mean_se(total.r_sum.value(), total.r_sq.value());
    let (e, e_se) = mean_se(total.e_sum.value(), total.e_sq.value());
    let y = total.lat_sum.value();
    let x = total.delivered.value();
    let (l, l_se) = if x > 0.0 {
        let l = y / x;
        // delta-method variance of the ratio estimator
        let resid_sq =
            total.lat_sq.value() - 2.0 * l * total.lat_cross.value() + l * l * total.del_sq.value();
        let xbar = x / k;
        let var = if runs > 1 { (resid_sq / (k - 1.0)).max(0.0) } else { 0.0 };
        (l, (var / k).sqrt() / xbar)
    } else {
        (0.0, 0.0)
    };

    SimReport {
        runs,
        seed,
        n_nodes: model.n_nodes(),
        delivery_ratio: r,
        delivery_ratio_se: r_se,
        latency_mean: l,
        latency_mean_se: l_se,
        latency_pdf: total.pdf.into_iter().map(|(t, c)| (t, c as f64 / k)).collect(),
        energy_total: e,
        energy_total_se: e_se,
        dropped_cca: total.drop_cca as f64 / k,
        dropped_retry: total.drop_retry as f64 / k,
        ledger: total.ledger.scaled(1.0 / k),
        histogram: total.histogram,
        wall_time: started.elapsed().as_secs_f64(),
    }
}
