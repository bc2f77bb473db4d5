//! Event Chains Computation.
//!
//! Every chain on the worklist is examined independently: the conditional CCA
//! table of a residual node is built from the chain's channel history, the
//! residual-node compositions are derived from it, the chain is finalised
//! with its no-further-transmission probability and every possible next event
//! is pushed back with the extended chain's probability.

pub mod history;
pub mod next;
pub mod residual;
pub mod table;

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_deque::{Injector, Steal, Stealer, Worker};
use thiserror::Error;

use crate::chain::{Chain, Event, InvalidComposition, NodeComposition};
use crate::energy::chain_ledger;
use crate::params::DerivedModel;
use crate::scalar::{is_one, is_zero, sum, Binomials, Scalar};

pub use history::{infeasible_set, ChannelHistory};
pub use next::{initial_events, next_event_probs};
pub use residual::{
    composition_prob, no_txs_prob, residual_probs, CompositionDist, ResidualProbs,
    RESIDUAL_TOLERANCE,
};
pub use table::{max_offset, CondCcaTable};

/// Per-chain conservation tolerance reported by [`EccStats`].
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no residual node state is consistent with the chain")]
    InconsistentChain,
    #[error("residual probabilities sum to {sum}, expected 1")]
    NormalizationViolation { sum: f64 },
    #[error(transparent)]
    Composition(#[from] InvalidComposition),
    #[error("chain cap of {cap} reached after examining {examined} chains; results are partial")]
    BudgetExceeded { cap: u64, examined: u64 },
}

/// State of the nodes that have not delivered, given a chain.
#[derive(Debug, Clone)]
pub struct ResidualAnalysis<T> {
    pub table: CondCcaTable<T>,
    pub residuals: ResidualProbs<T>,
    pub compositions: CompositionDist<T>,
}

/// Everything derived from one chain. `residual` is `None` once every node
/// has delivered.
#[derive(Debug, Clone)]
pub struct Examination<T> {
    pub residual: Option<ResidualAnalysis<T>>,
    pub no_txs: T,
    pub next: Vec<(Event, T)>,
}

impl<T: Scalar> Examination<T> {
    /// `|P{no_txs} + sum of next-event probabilities - 1|`.
    pub fn conservation_error(&self) -> f64 {
        let total = sum(
            std::iter::once(self.no_txs.clone()).chain(self.next.iter().map(|(_, p)| p.clone())),
        );
        (total - T::one()).to_f64().abs()
    }
}

/// Examines a chain given as its event sequence and success count.
pub fn examine<T: Scalar>(
    model: &DerivedModel,
    events: &[Event],
    n_success: usize,
    binom: &Binomials<T>,
) -> Result<Examination<T>, EngineError> {
    let last = *events.last().ok_or(EngineError::InconsistentChain)?;
    let n_r = model.n_nodes() - n_success;
    if n_r == 0 {
        return Ok(Examination {
            residual: None,
            no_txs: T::one(),
            next: Vec::new(),
        });
    }
    let history = ChannelHistory::new(model, events);
    let table = CondCcaTable::build(model, &history)?;
    let residuals = residual_probs(&table)?;
    let compositions = CompositionDist::new(n_r, last.kind, &residuals, binom)?;
    let no_txs = compositions.prob(NodeComposition { n_p: 0, n_np: 0, n_d: n_r })?;
    let next = if is_one(&no_txs) {
        Vec::new()
    } else {
        next_event_probs(model, &table, &residuals, &compositions)
    };
    Ok(Examination {
        residual: Some(ResidualAnalysis {
            table,
            residuals,
            compositions,
        }),
        no_txs,
        next,
    })
}

/// Counters of one ECC run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct EccStats {
    pub examined: u64,
    pub finalized: u64,
    /// Children dropped because their probability fell below the threshold.
    pub pruned: u64,
    pub max_conservation_error: f64,
    pub max_residual_error: f64,
    pub wall_time: Duration,
}

/// Snapshot passed to the progress callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub examined: u64,
    pub finalized: u64,
    pub pending: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct EccOutput<T> {
    /// Finalised chains sorted by event sequence.
    pub chains: Vec<Chain<T>>,
    pub stats: EccStats,
    /// The chain cap stopped the run early.
    pub budget_exceeded: bool,
}

impl<T: Scalar> EccOutput<T> {
    pub fn coverage(&self) -> T {
        sum(self.chains.iter().map(|c| c.prob.clone()))
    }
}

pub type ProgressFn<'a> = &'a (dyn Fn(&Progress) + Sync);

const PROGRESS_EVERY: u64 = 1 << 14;

/// Runs ECC to completion. Hitting the chain cap is an error.
pub fn run_ecc<T: Scalar>(model: &DerivedModel) -> Result<EccOutput<T>, EngineError> {
    let out = run_ecc_with::<T>(model, None)?;
    if out.budget_exceeded {
        return Err(EngineError::BudgetExceeded {
            cap: model.config.chain_cap,
            examined: out.stats.examined,
        });
    }
    Ok(out)
}

/// Runs ECC, returning partial results flagged by `budget_exceeded` when the
/// chain cap is hit.
pub fn run_ecc_with<T: Scalar>(
    model: &DerivedModel,
    progress: Option<ProgressFn<'_>>,
) -> Result<EccOutput<T>, EngineError> {
    let started = Instant::now();
    let theta = T::from_f64(model.theta());
    let workers = match model.config.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        k => k,
    };
    let binom = Binomials::<T>::new(model.n_nodes());
    let shared = Shared {
        injector: Injector::new(),
        pending: AtomicUsize::new(0),
        examined: AtomicU64::new(0),
        finalized: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        budget_hit: AtomicBool::new(false),
        error: Mutex::new(None),
    };

    let mut pruned = 0u64;
    for (event, p) in initial_events::<T>(model) {
        if p >= theta {
            shared.pending.fetch_add(1, Ordering::SeqCst);
            shared.injector.push(Chain::root(event, p));
        } else {
            pruned += 1;
        }
    }

    let locals: Vec<Worker<Chain<T>>> = (0..workers).map(|_| Worker::new_lifo()).collect();
    let stealers: Vec<Stealer<Chain<T>>> = locals.iter().map(|w| w.stealer()).collect();
    let ctx = WorkerCtx {
        model,
        theta: &theta,
        binom: &binom,
        shared: &shared,
        stealers: &stealers,
        progress,
        started,
    };

    let results: Vec<WorkerResult<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = locals
            .into_iter()
            .map(|local| {
                let ctx = &ctx;
                scope.spawn(move || ctx.run(local))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ECC worker panicked"))
            .collect()
    });

    if let Some(e) = shared.error.lock().expect("poisoned").take() {
        return Err(e);
    }

    let mut stats = EccStats {
        pruned,
        ..EccStats::default()
    };
    let mut keyed = Vec::new();
    for r in results {
        stats.examined += r.examined;
        stats.pruned += r.pruned;
        stats.max_conservation_error = stats.max_conservation_error.max(r.max_conservation);
        stats.max_residual_error = stats.max_residual_error.max(r.max_residual);
        keyed.extend(r.finalized);
    }
    keyed.sort_by(|a: &(Vec<Event>, Chain<T>), b| a.0.cmp(&b.0));
    stats.finalized = keyed.len() as u64;
    stats.wall_time = started.elapsed();
    Ok(EccOutput {
        chains: keyed.into_iter().map(|(_, c)| c).collect(),
        stats,
        budget_exceeded: shared.budget_hit.load(Ordering::SeqCst),
    })
}

struct Shared<T> {
    injector: Injector<Chain<T>>,
    // chains queued or being examined
    pending: AtomicUsize,
    examined: AtomicU64,
    finalized: AtomicU64,
    stop: AtomicBool,
    budget_hit: AtomicBool,
    error: Mutex<Option<EngineError>>,
}

struct WorkerCtx<'a, T: Scalar> {
    model: &'a DerivedModel,
    theta: &'a T,
    binom: &'a Binomials<T>,
    shared: &'a Shared<T>,
    stealers: &'a [Stealer<Chain<T>>],
    progress: Option<ProgressFn<'a>>,
    started: Instant,
}

struct WorkerResult<T> {
    finalized: Vec<(Vec<Event>, Chain<T>)>,
    examined: u64,
    pruned: u64,
    max_conservation: f64,
    max_residual: f64,
}

impl<T: Scalar> WorkerCtx<'_, T> {
    fn run(&self, local: Worker<Chain<T>>) -> WorkerResult<T> {
        let mut out = WorkerResult {
            finalized: Vec::new(),
            examined: 0,
            pruned: 0,
            max_conservation: 0.0,
            max_residual: 0.0,
        };
        let sh = self.shared;
        let mut idle_spins = 0u32;
        loop {
            if sh.stop.load(Ordering::Relaxed) {
                break;
            }
            let Some(chain) = self.find_task(&local) else {
                if sh.pending.load(Ordering::SeqCst) == 0 {
                    break;
                }
                idle_spins += 1;
                if idle_spins > 64 {
                    std::thread::sleep(Duration::from_micros(50));
                } else {
                    std::thread::yield_now();
                }
                continue;
            };
            idle_spins = 0;

            let n = sh.examined.fetch_add(1, Ordering::Relaxed) + 1;
            if n > self.model.config.chain_cap {
                sh.budget_hit.store(true, Ordering::SeqCst);
                sh.stop.store(true, Ordering::SeqCst);
                sh.pending.fetch_sub(1, Ordering::SeqCst);
                break;
            }
            out.examined += 1;
            if let Err(e) = self.process(chain, &local, &mut out) {
                let mut slot = sh.error.lock().expect("poisoned");
                slot.get_or_insert(e);
                sh.stop.store(true, Ordering::SeqCst);
            }
            sh.pending.fetch_sub(1, Ordering::SeqCst);

            if n % PROGRESS_EVERY == 0 {
                if let Some(cb) = self.progress {
                    cb(&Progress {
                        examined: n,
                        finalized: sh.finalized.load(Ordering::Relaxed),
                        pending: sh.pending.load(Ordering::Relaxed),
                        elapsed: self.started.elapsed(),
                    });
                }
            }
        }
        out
    }

    fn find_task(&self, local: &Worker<Chain<T>>) -> Option<Chain<T>> {
        local.pop().or_else(|| {
            std::iter::repeat_with(|| {
                self.shared
                    .injector
                    .steal_batch_and_pop(local)
                    .or_else(|| self.stealers.iter().map(|s| s.steal()).collect::<Steal<_>>())
            })
            .find(|s| !s.is_retry())
            .and_then(|s| s.success())
        })
    }

    fn process(
        &self,
        chain: Chain<T>,
        local: &Worker<Chain<T>>,
        out: &mut WorkerResult<T>,
    ) -> Result<(), EngineError> {
        let events = chain.events();
        let ex = examine(self.model, &events, chain.n_success(), self.binom)?;
        if let Some(r) = &ex.residual {
            let residual_err = (r.residuals.total().to_f64() - 1.0).abs();
            out.max_residual = out.max_residual.max(residual_err);
        }
        out.max_conservation = out.max_conservation.max(ex.conservation_error());

        if !is_zero(&ex.no_txs) {
            let p = chain.prob.clone() * ex.no_txs.clone();
            if p >= *self.theta {
                let mut done = chain.clone();
                done.prob = p;
                let ledger = chain_ledger(
                    self.model,
                    &events,
                    ex.residual.as_ref().map(|r| (&r.table, &r.residuals)),
                );
                done.energy = ledger.joules(&self.model.config.energy, self.model.timing());
                self.shared.finalized.fetch_add(1, Ordering::Relaxed);
                out.finalized.push((events, done));
            }
        }
        for (event, p) in ex.next {
            let child = chain.extend(event, p);
            if child.prob >= *self.theta && !is_zero(&child.prob) {
                self.shared.pending.fetch_add(1, Ordering::SeqCst);
                local.push(child);
            } else {
                out.pruned += 1;
            }
        }
        Ok(())
    }
}
