//! Model configuration, validation and the integer time grid.
//!
//! All durations are integer symbol counts (16 µs per symbol at 250 kbps).
//! Validation additionally fixes a slot grid: every CCA instant, event start
//! and event finish produced by the model is a multiple of the backoff period,
//! so the engine indexes time by slot number.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyParams;

/// Largest backoff exponent accepted by validation.
pub const MAX_BACKOFF_EXPONENT: u8 = 8;

/// Default safety cap on examined chains.
pub const DEFAULT_CHAIN_CAP: u64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{key}` = `{value}`")]
    Parse { key: String, value: String },
    #[error("`{key}` = {value} out of range: {reason}")]
    OutOfRange {
        key: String,
        value: String,
        reason: String,
    },
    #[error("d_cca + d_tat = {sum} symbols is not a positive multiple of d_bp = {d_bp}")]
    GridMisaligned { sum: u64, d_bp: u64 },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
}

/// MAC-layer CSMA/CA attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacParams {
    pub mac_min_be: u8,
    pub mac_max_be: u8,
    pub mac_max_csma_backoffs: u8,
    pub mac_max_frame_retries: u8,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            mac_min_be: 3,
            mac_max_be: 4,
            mac_max_csma_backoffs: 2,
            mac_max_frame_retries: 1,
        }
    }
}

/// Radio timing, in symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Backoff period (slot).
    pub d_bp: u64,
    pub d_cca: u64,
    /// RX/TX turnaround.
    pub d_tat: u64,
    pub d_tx: u64,
    pub d_ack: u64,
    /// Seconds per symbol.
    pub symbol_duration_s: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            d_bp: 20,
            d_cca: 8,
            d_tat: 12,
            d_tx: 266,
            d_ack: 22,
            symbol_duration_s: 16e-6,
        }
    }
}

impl TimingParams {
    /// Smallest slot boundary at or after `x`.
    pub fn align_up(&self, x: u64) -> u64 {
        x.div_ceil(self.d_bp) * self.d_bp
    }

    /// Gap between the end of a data frame and the next slot boundary.
    /// Zero when the frame already ends on a boundary.
    pub fn d_diff(&self) -> u64 {
        (self.d_bp - self.d_tx % self.d_bp) % self.d_bp
    }

    /// ACK wait timeout, counted from the end of the data frame.
    pub fn d_to(&self) -> u64 {
        self.d_diff() + 2 * self.d_bp
    }

    /// CCA, turnaround, frame and timeout: delay from a failed transmission's
    /// CCA to the start of its retry backoff.
    pub fn d_rtx(&self) -> u64 {
        self.d_cca + self.d_tat + self.d_tx + self.d_to()
    }

    /// Busy span of a successful exchange, CCA start to ACK end.
    pub fn success_span(&self) -> u64 {
        self.d_cca + self.d_tat + self.d_tx + self.d_tat + self.d_ack
    }

    /// Busy span of a collision, CCA start to end of the frames.
    pub fn failure_span(&self) -> u64 {
        self.d_cca + self.d_tat + self.d_tx
    }

    pub fn symbols_to_ms(&self, symbols: f64) -> f64 {
        symbols * self.symbol_duration_s * 1e3
    }
}

/// How a residual node's past backoff choices are renormalised against the
/// observed chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Uniform over choices whose landing instant is feasible one step ahead.
    OneStep,
    /// Weight each choice by the probability that the rest of the node's
    /// history up to the last finish time stays consistent with the chain.
    #[default]
    Lookahead,
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::OneStep => f.write_str("one_step"),
            Conditioning::Lookahead => f.write_str("lookahead"),
        }
    }
}

impl FromStr for Conditioning {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "one_step" => Ok(Conditioning::OneStep),
            "lookahead" => Ok(Conditioning::Lookahead),
            _ => Err(()),
        }
    }
}

/// User-facing configuration before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_nodes: u32,
    pub theta: f64,
    pub workers: usize,
    pub mac: MacParams,
    pub timing: TimingParams,
    pub energy: EnergyParams,
    pub chain_cap: u64,
    pub conditioning: Conditioning,
}

impl ModelConfig {
    pub fn new(n_nodes: u32) -> Self {
        Self {
            n_nodes,
            theta: 0.0,
            workers: 1,
            mac: MacParams::default(),
            timing: TimingParams::default(),
            energy: EnergyParams::default(),
            chain_cap: DEFAULT_CHAIN_CAP,
            conditioning: Conditioning::default(),
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_mac(mut self, min_be: u8, max_be: u8, backoffs: u8, retries: u8) -> Self {
        self.mac = MacParams {
            mac_min_be: min_be,
            mac_max_be: max_be,
            mac_max_csma_backoffs: backoffs,
            mac_max_frame_retries: retries,
        };
        self
    }

    pub fn with_conditioning(mut self, conditioning: Conditioning) -> Self {
        self.conditioning = conditioning;
        self
    }

    pub fn with_chain_cap(mut self, cap: u64) -> Self {
        self.chain_cap = cap;
        self
    }

    /// Checks every invariant and derives the window/grid quantities.
    pub fn derive(self) -> Result<DerivedModel, ConfigError> {
        fn out_of_range(key: &str, value: impl fmt::Display, reason: &str) -> ConfigError {
            ConfigError::OutOfRange {
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            }
        }

        if self.n_nodes == 0 {
            return Err(out_of_range("n_nodes", self.n_nodes, "need at least one node"));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(out_of_range("theta", self.theta, "must lie in [0, 1)"));
        }
        if self.workers == 0 {
            return Err(out_of_range("workers", self.workers, "need at least one worker"));
        }
        if self.chain_cap == 0 {
            return Err(out_of_range("chain_cap", self.chain_cap, "must be positive"));
        }
        let mac = self.mac;
        if mac.mac_max_be > MAX_BACKOFF_EXPONENT {
            return Err(out_of_range("mac_max_be", mac.mac_max_be, "must be <= 8"));
        }
        if mac.mac_min_be > mac.mac_max_be {
            return Err(out_of_range(
                "mac_min_be",
                mac.mac_min_be,
                "must not exceed mac_max_be",
            ));
        }
        let t = self.timing;
        if t.d_bp == 0 {
            return Err(out_of_range("d_bp", t.d_bp, "must be positive"));
        }
        if t.d_tx == 0 {
            return Err(out_of_range("d_tx", t.d_tx, "must be positive"));
        }
        if !(t.symbol_duration_s > 0.0 && t.symbol_duration_s.is_finite()) {
            return Err(out_of_range(
                "symbol_duration_s",
                t.symbol_duration_s,
                "must be positive",
            ));
        }
        let step = t.d_cca + t.d_tat;
        if step == 0 || step % t.d_bp != 0 {
            return Err(ConfigError::GridMisaligned { sum: step, d_bp: t.d_bp });
        }
        self.energy.validate()?;

        let b_max = mac.mac_max_csma_backoffs as usize + 1;
        let windows = (1..=b_max)
            .map(|i| {
                let be = (mac.mac_min_be as usize + i - 1).min(mac.mac_max_be as usize);
                1u64 << be
            })
            .collect();
        let grid = SlotGrid {
            cca_step: step / t.d_bp,
            success_len: t.align_up(t.success_span()) / t.d_bp,
            failure_len: t.align_up(t.failure_span()) / t.d_bp,
            rtx: t.d_rtx() / t.d_bp,
        };
        Ok(DerivedModel {
            windows,
            b_max,
            t_max: mac.mac_max_frame_retries as usize + 1,
            d_rtx: t.d_rtx(),
            grid,
            config: self,
        })
    }
}

/// Event and backoff lengths expressed in backoff periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGrid {
    /// Slots from a busy CCA to the start of the next backoff.
    pub cca_step: u64,
    pub success_len: u64,
    pub failure_len: u64,
    /// Slots from a failed transmission's CCA to the start of its retry backoff.
    pub rtx: u64,
}

/// Validated model shared read-only by every component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedModel {
    pub config: ModelConfig,
    /// Backoff window of each stage, in slots (`W_1 .. W_{B_max}`).
    pub windows: Vec<u64>,
    /// Maximum consecutive CCAs per attempt.
    pub b_max: usize,
    /// Maximum transmission attempts per packet.
    pub t_max: usize,
    /// Symbols from a failed attempt's CCA to the start of its retry backoff.
    pub d_rtx: u64,
    pub grid: SlotGrid,
}

impl DerivedModel {
    pub fn n_nodes(&self) -> usize {
        self.config.n_nodes as usize
    }

    pub fn theta(&self) -> f64 {
        self.config.theta
    }

    pub fn timing(&self) -> &TimingParams {
        &self.config.timing
    }

    /// Window of 1-based stage `i`.
    pub fn window(&self, stage: usize) -> u64 {
        self.windows[stage - 1]
    }

    pub fn w1(&self) -> u64 {
        self.windows[0]
    }

    pub fn w_last(&self) -> u64 {
        self.windows[self.b_max - 1]
    }

    pub fn slot_to_symbols(&self, slot: u64) -> u64 {
        slot * self.config.timing.d_bp
    }
}

/// Every key understood by [`validate_config`].
pub const CONFIG_KEYS: &[&str] = &[
    "n_nodes",
    "theta",
    "workers",
    "chain_cap",
    "conditioning",
    "mac_min_be",
    "mac_max_be",
    "mac_max_csma_backoffs",
    "mac_max_frame_retries",
    "d_bp",
    "d_cca",
    "d_tat",
    "d_tx",
    "d_ack",
    "symbol_duration_s",
    "energy.tx_ma",
    "energy.rx_ma",
    "energy.idle_ma",
    "energy.off_ma",
    "energy.volt",
];

/// Parses flat `key = value` text. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: idx + 1 })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: idx + 1 });
        }
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_key<T: FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
    match raw.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Parse {
            key: key.to_string(),
            value: v.clone(),
        }),
    }
}

/// Builds a [`DerivedModel`] from a key/value map. Only `n_nodes` is
/// mandatory; every other key falls back to the standard 2.4 GHz defaults.
pub fn validate_config(raw: &BTreeMap<String, String>) -> Result<DerivedModel, ConfigError> {
    if let Some(unknown) = raw.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(unknown.clone()));
    }
    let n_nodes: u32 =
        parse_key(raw, "n_nodes")?.ok_or_else(|| ConfigError::MissingKey("n_nodes".into()))?;
    let mut cfg = ModelConfig::new(n_nodes);

    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = parse_key(raw, $key)? {
                $field = v;
            }
        };
    }
    set!("theta", cfg.theta);
    set!("workers", cfg.workers);
    set!("chain_cap", cfg.chain_cap);
    set!("mac_min_be", cfg.mac.mac_min_be);
    set!("mac_max_be", cfg.mac.mac_max_be);
    set!("mac_max_csma_backoffs", cfg.mac.mac_max_csma_backoffs);
    set!("mac_max_frame_retries", cfg.mac.mac_max_frame_retries);
    set!("d_bp", cfg.timing.d_bp);
    set!("d_cca", cfg.timing.d_cca);
    set!("d_tat", cfg.timing.d_tat);
    set!("d_tx", cfg.timing.d_tx);
    set!("d_ack", cfg.timing.d_ack);
    set!("symbol_duration_s", cfg.timing.symbol_duration_s);
    set!("energy.tx_ma", cfg.energy.tx_ma);
    set!("energy.rx_ma", cfg.energy.rx_ma);
    set!("energy.idle_ma", cfg.energy.idle_ma);
    set!("energy.off_ma", cfg.energy.off_ma);
    set!("energy.volt", cfg.energy.volt);
    if let Some(v) = raw.get("conditioning") {
        cfg.conditioning = v.parse().map_err(|_| ConfigError::Parse {
            key: "conditioning".into(),
            value: v.clone(),
        })?;
    }
    cfg.derive()
}
