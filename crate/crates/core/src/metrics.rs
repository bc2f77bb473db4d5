//! Coverage, delivery ratio, latency and energy of a finalised chain set.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Chain, EventKind};
use crate::energy::chain_ledger;
use crate::engine::{examine, EngineError};
use crate::params::{DerivedModel, TimingParams};
use crate::scalar::{Accumulator, Binomials, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no finalised chains to evaluate")]
    EmptyChainSet,
    #[error("zero total probability in the chain set")]
    ZeroCoverage,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_nodes: usize,
    pub theta: f64,
    pub coverage: f64,
    pub delivery_ratio: f64,
    /// `P(t)`: probability mass of delivered packets finishing at `t`
    /// (symbols). Sums to `N * coverage * delivery_ratio`.
    pub latency_pdf: BTreeMap<u64, f64>,
    /// Seconds.
    pub latency_mean: f64,
    /// Joules, all nodes.
    pub energy_total: f64,
    pub chain_count: u64,
    /// Seconds.
    pub wall_time: f64,
}

/// One row of the tabular output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n: usize,
    pub theta: f64,
    pub coverage: f64,
    pub chains: u64,
    pub r_pct: f64,
    pub l_ms: f64,
    pub e_mj: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdfRow {
    pub t_ms: f64,
    pub p: f64,
}

impl MetricsReport {
    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            n: self.n_nodes,
            theta: self.theta,
            coverage: self.coverage,
            chains: self.chain_count,
            r_pct: self.delivery_ratio * 100.0,
            l_ms: self.latency_mean * 1e3,
            e_mj: self.energy_total * 1e3,
            time_s: self.wall_time,
        }
    }

    pub fn latency_mean_ms(&self) -> f64 {
        self.latency_mean * 1e3
    }

    /// Instant (symbols) of the largest `P(t)`.
    pub fn latency_mode(&self) -> Option<u64> {
        self.latency_pdf
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(t, _)| *t)
    }

    pub fn pdf_rows(&self, timing: &TimingParams) -> Vec<PdfRow> {
        self.latency_pdf
            .iter()
            .map(|(&t, &p)| PdfRow {
                t_ms: timing.symbols_to_ms(t as f64),
                p,
            })
            .collect()
    }
}

/// Writes `rows` as CSV with a header line.
pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Metrics over finalised chains.
pub fn compute_metrics<T: Scalar>(
    model: &DerivedModel,
    chains: &[Chain<T>],
    wall_time: f64,
) -> Result<MetricsReport, MetricsError> {
    if chains.is_empty() {
        return Err(MetricsError::EmptyChainSet);
    }
    let n = model.n_nodes() as f64;
    let sym = model.timing().symbol_duration_s;
    let mut cov = Accumulator::<f64>::new();
    let mut delivered = Accumulator::<f64>::new();
    let mut energy = Accumulator::<f64>::new();
    let mut pdf: BTreeMap<u64, Accumulator<f64>> = BTreeMap::new();
    for c in chains {
        let p = c.prob.to_f64();
        cov.add(p);
        delivered.add(p * c.n_success() as f64);
        energy.add(p * c.energy);
        for e in c.events().iter().filter(|e| e.kind == EventKind::Success) {
            pdf.entry(e.finish).or_default().add(p);
        }
    }
    let coverage = cov.value();
    if coverage <= 0.0 {
        return Err(MetricsError::ZeroCoverage);
    }
    let latency_pdf: BTreeMap<u64, f64> = pdf.into_iter().map(|(t, a)| (t, a.value())).collect();
    let mut num = Accumulator::<f64>::new();
    let mut den = Accumulator::<f64>::new();
    for (&t, &p) in &latency_pdf {
        num.add(t as f64 * p);
        den.add(p);
    }
    let latency_mean = if den.value() > 0.0 {
        num.value() / den.value() * sym
    } else {
        0.0
    };
    Ok(MetricsReport {
        n_nodes: model.n_nodes(),
        theta: model.theta(),
        coverage,
        delivery_ratio: delivered.value() / (coverage * n),
        latency_pdf,
        latency_mean,
        energy_total: energy.value() / coverage,
        chain_count: chains.len() as u64,
        wall_time,
    })
}

/// `en_c` of a chain under the model's energy parameters, joules.
pub fn chain_energy<T: Scalar>(model: &DerivedModel, chain: &Chain<T>) -> Result<f64, EngineError> {
    let events = chain.events();
    let binom = Binomials::<T>::new(model.n_nodes());
    let ex = examine(model, &events, chain.n_success(), &binom)?;
    let ledger = chain_ledger(
        model,
        &events,
        ex.residual.as_ref().map(|r| (&r.table, &r.residuals)),
    );
    Ok(ledger.joules(&model.config.energy, model.timing()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::make_event;
    use crate::energy::EnergyParams;
    use crate::params::ModelConfig;

    #[test]
    fn ratio_of_single_chain() {
        let m = ModelConfig::new(10).derive().unwrap();
        let a = make_event(&m, EventKind::Success, 0);
        let b = make_event(&m, EventKind::Success, a.finish);
        let c = Chain::root(a, 1.0f64).extend(b, 1.0);
        let r = compute_metrics(&m, &[c], 0.0).unwrap();
        assert!((r.delivery_ratio - 0.2).abs() < 1e-15);
        assert_eq!(r.latency_pdf.len(), 2);
        let total: f64 = r.latency_pdf.values().sum();
        assert!((total - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_an_error() {
        let m = ModelConfig::new(3).derive().unwrap();
        assert!(matches!(
            compute_metrics::<f64>(&m, &[], 0.0),
            Err(MetricsError::EmptyChainSet)
        ));
    }

    #[test]
    fn zero_currents_zero_energy() {
        let mut cfg = ModelConfig::new(3);
        cfg.energy = EnergyParams::zero();
        let m = cfg.derive().unwrap();
        let c = Chain::root(make_event(&m, EventKind::Failure, 40), 0.1f64);
        assert_eq!(chain_energy(&m, &c).unwrap(), 0.0);
    }

    #[test]
    fn single_node_energy_closed_form() {
        let m = ModelConfig::new(1).derive().unwrap();
        let c = Chain::root(make_event(&m, EventKind::Success, 40), 0.125f64);
        let t = 16e-6;
        let expected = 3.0 * (18.8e-3 * (8.0 + 12.0 + 12.0 + 22.0) * t + 17.4e-3 * 266.0 * t + 0.426e-3 * 40.0 * t);
        assert!((chain_energy(&m, &c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn csv_schema() {
        let m = ModelConfig::new(1).derive().unwrap();
        let c = Chain::root(make_event(&m, EventKind::Success, 0), 1.0f64);
        let r = compute_metrics(&m, &[c], 0.5).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r.row()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,theta,coverage,chains,r_pct,l_ms,e_mj,time_s\n"));
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let back: MetricsRow = rd.deserialize().next().unwrap().unwrap();
        assert_eq!(back, r.row());
        assert!((back.l_ms - 5.12).abs() < 1e-12);
    }
}
