//! Radio energy accounting.
//!
//! Both the analytical model and the simulator charge radio time through the
//! same [`RadioLedger`]: a CCA is receive time, the turnaround after a clear
//! CCA and the turnaround before the ACK are receive time, the frame is
//! transmit time, waiting for the ACK (or its timeout) is receive time, and
//! backoff gaps are idle time. A node that has delivered or dropped its packet
//! is off.

use serde::{Deserialize, Serialize};

use crate::chain::{Event, EventKind};
use crate::engine::{CondCcaTable, ResidualProbs};
use crate::params::{ConfigError, DerivedModel, TimingParams};
use crate::scalar::Scalar;

/// CC2420 current draws (mA) and supply voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub tx_ma: f64,
    pub rx_ma: f64,
    pub idle_ma: f64,
    pub off_ma: f64,
    pub volt: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            tx_ma: 17.4,
            rx_ma: 18.8,
            idle_ma: 0.426,
            off_ma: 0.0,
            volt: 3.0,
        }
    }
}

impl EnergyParams {
    pub fn zero() -> Self {
        Self {
            tx_ma: 0.0,
            rx_ma: 0.0,
            idle_ma: 0.0,
            off_ma: 0.0,
            volt: 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("energy.tx_ma", self.tx_ma),
            ("energy.rx_ma", self.rx_ma),
            ("energy.idle_ma", self.idle_ma),
            ("energy.off_ma", self.off_ma),
            ("energy.volt", self.volt),
        ];
        for (key, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::OutOfRange {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: "must be a non-negative number".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Time spent in each radio state, in symbols (fractional for expectations).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RadioLedger {
    pub tx: f64,
    pub rx: f64,
    pub idle: f64,
    pub off: f64,
}

impl RadioLedger {
    pub fn total(&self) -> f64 {
        self.tx + self.rx + self.idle + self.off
    }

    pub fn add(&mut self, other: &RadioLedger) {
        self.tx += other.tx;
        self.rx += other.rx;
        self.idle += other.idle;
        self.off += other.off;
    }

    pub fn scaled(&self, k: f64) -> RadioLedger {
        RadioLedger {
            tx: self.tx * k,
            rx: self.rx * k,
            idle: self.idle * k,
            off: self.off * k,
        }
    }

    /// Joules drawn over the ledger.
    pub fn joules(&self, energy: &EnergyParams, timing: &TimingParams) -> f64 {
        let charge_ma_symbols = energy.tx_ma * self.tx
            + energy.rx_ma * self.rx
            + energy.idle_ma * self.idle
            + energy.off_ma * self.off;
        energy.volt * charge_ma_symbols * 1e-3 * timing.symbol_duration_s
    }
}

/// Per-activity radio costs derived from the timing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityCosts {
    /// Receive time of one CCA.
    pub cca_rx: f64,
    /// Receive + transmit time of a delivered frame after its CCA.
    pub success_rx: f64,
    pub success_tx: f64,
    /// Receive + transmit time of a collided frame after its CCA, timeout included.
    pub failure_rx: f64,
    pub failure_tx: f64,
}

impl ActivityCosts {
    pub fn new(t: &TimingParams) -> Self {
        Self {
            cca_rx: t.d_cca as f64,
            success_rx: (t.d_tat + t.d_tat + t.d_ack) as f64,
            success_tx: t.d_tx as f64,
            failure_rx: (t.d_tat + t.d_to()) as f64,
            failure_tx: t.d_tx as f64,
        }
    }
}

/// Expected radio occupancy of all nodes over `[0, f_m]` for a chain.
///
/// Each success charges its transmitter a CCA, the frame and the ACK
/// exchange, with the backoff before it idle. Every residual node is charged
/// its expected CCAs and collided frames before `f_m` from the conditional
/// CCA table, idles until its expected drop instant and is off afterwards.
/// Collisions whose expected residual participation is below two are topped
/// up with frames of nodes that delivered later.
pub fn chain_ledger<T: Scalar>(
    model: &DerivedModel,
    events: &[Event],
    residual: Option<(&CondCcaTable<T>, &ResidualProbs<T>)>,
) -> RadioLedger {
    let timing = model.timing();
    let d_bp = timing.d_bp as f64;
    let costs = ActivityCosts::new(timing);
    let horizon = events.last().map_or(0, |e| e.finish) as f64;
    let n_r = (model.n_nodes() - events.iter().filter(|e| e.kind == EventKind::Success).count()) as f64;
    let mut total = RadioLedger::default();

    for e in events.iter().filter(|e| e.kind == EventKind::Success) {
        let start = e.start as f64;
        let end = start + costs.cca_rx + costs.success_rx + costs.success_tx;
        total.add(&RadioLedger {
            tx: costs.success_tx,
            rx: costs.cca_rx + costs.success_rx,
            idle: start,
            off: (horizon - end).max(0.0),
        });
    }

    let Some((table, residuals)) = residual else {
        return total;
    };
    let f = table.finish();
    let b_max = table.b_max();
    let t_max = table.t_max();
    let mut ccas = 0.0;
    let mut frames = 0.0;
    let mut end = 0.0;
    let mut end_mass = 0.0;
    for t in 0..f {
        let busy = table.is_busy(t);
        let fail = table.is_fail_start(t);
        let at = t as f64 * d_bp;
        for s in table.states() {
            let m = table.at(s, t).to_f64();
            if m == 0.0 {
                continue;
            }
            ccas += m;
            if fail && !busy {
                frames += m;
                if s.attempt == t_max {
                    end += m * (at + costs.cca_rx + costs.failure_rx + costs.failure_tx);
                    end_mass += m;
                }
            } else if busy && s.stage == b_max {
                end += m * (at + costs.cca_rx);
                end_mass += m;
            }
        }
    }
    let active = residuals.p_ap.to_f64() + residuals.p_anp.to_f64();
    end += active * horizon;
    end_mass += active;
    let expected_end = if end_mass > 0.0 { (end / end_mass).min(horizon) } else { horizon };
    let rx = ccas * costs.cca_rx + frames * costs.failure_rx;
    let tx = frames * costs.failure_tx;
    let node = RadioLedger {
        tx,
        rx,
        idle: (expected_end - rx - tx).max(0.0),
        off: horizon - expected_end,
    };
    total.add(&node.scaled(n_r));

    for e in events.iter().filter(|e| e.kind == EventKind::Failure) {
        let slot = e.start / timing.d_bp;
        let expected = n_r * table.marginal(slot).to_f64();
        let deficit = (2.0 - expected).max(0.0);
        total.add(&RadioLedger {
            tx: deficit * costs.failure_tx,
            rx: deficit * (costs.cca_rx + costs.failure_rx),
            idle: 0.0,
            off: 0.0,
        });
    }
    total
}
