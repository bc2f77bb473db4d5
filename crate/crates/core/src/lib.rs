//! Event Chains Computation for IEEE 802.15.4 unslotted CSMA/CA.
//!
//! The analytical engine enumerates the chains of transmission events that
//! `N` contending nodes can produce, each with its exact probability, and
//! derives delivery ratio, latency and energy from them. A Monte-Carlo
//! simulator and an exhaustive enumerator of the same protocol serve as
//! oracles.

pub mod chain;
pub mod energy;
pub mod engine;
pub mod exact;
pub mod metrics;
pub mod params;
pub mod protocol;
pub mod scalar;
pub mod schedule;
pub mod sim;

use num_rational::BigRational;

pub use chain::{make_event, Chain, Event, EventKind, NodeComposition};
pub use engine::{run_ecc, run_ecc_with, EccOutput, EngineError};
pub use exact::enumerate_exact;
pub use metrics::{compute_metrics, MetricsReport};
pub use params::{validate_config, Conditioning, ConfigError, DerivedModel, ModelConfig};
pub use scalar::Scalar;
pub use sim::simulate;

/// Double-precision probabilities, the production setting.
pub type Prob = f64;
/// Exact rational probabilities for oracle comparisons.
pub type ExactProb = BigRational;

pub type Chain64 = Chain<Prob>;
pub type ExactChain = Chain<ExactProb>;
pub type EccOutput64 = EccOutput<Prob>;
pub type ExactEccOutput = EccOutput<ExactProb>;
