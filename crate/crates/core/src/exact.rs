//! Exhaustive enumeration of every joint backoff draw for tiny networks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::{Chain, Event};
use crate::params::DerivedModel;
use crate::protocol::Network;
use crate::scalar::{Accumulator, Scalar};

/// Largest number of leaves the enumerator will walk.
pub const MAX_LEAVES: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExactError {
    #[error("joint choice tree exceeds {limit} leaves")]
    TreeTooLarge { limit: u64 },
}

/// One outcome of the exhaustive walk.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome<T> {
    pub events: Vec<Event>,
    pub prob: T,
    /// Expected total energy given this outcome, joules.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct ExactDistribution<T> {
    /// Sorted by event sequence.
    pub outcomes: Vec<ExactOutcome<T>>,
    pub leaves: u64,
}

impl<T: Scalar> ExactDistribution<T> {
    pub fn total(&self) -> T {
        let mut acc = Accumulator::new();
        for o in &self.outcomes {
            acc.add(o.prob.clone());
        }
        acc.value()
    }

    /// Outcomes as finalised chains, for metric computation.
    pub fn to_chains(&self) -> Vec<Chain<T>> {
        self.outcomes
            .iter()
            .filter_map(|o| {
                let (first, rest) = o.events.split_first()?;
                let mut c = Chain::root(*first, T::one());
                for e in rest {
                    c = c.extend(*e, T::one());
                }
                c.prob = o.prob.clone();
                c.energy = o.energy;
                Some(c)
            })
            .collect()
    }
}

/// Walks every joint assignment of backoff draws, weighting each leaf by the
/// product of its uniform draw probabilities.
pub fn enumerate_exact<T: Scalar>(model: &DerivedModel) -> Result<ExactDistribution<T>, ExactError> {
    enumerate_exact_with_limit(model, MAX_LEAVES)
}

/// [`enumerate_exact`] with a custom leaf limit.
pub fn enumerate_exact_with_limit<T: Scalar>(
    model: &DerivedModel,
    limit: u64,
) -> Result<ExactDistribution<T>, ExactError> {
    let mut stack = vec![(Network::new(model), T::one())];
    let mut acc: BTreeMap<Vec<Event>, (T, f64)> = BTreeMap::new();
    let mut leaves = 0u64;
    while let Some((mut net, w)) = stack.pop() {
        if let Some(d) = net.pending_draw() {
            let branch = w / T::from_count(d.window);
            for k in (0..d.window).rev() {
                let mut child = net.clone();
                child.apply_draw(d.node, k);
                stack.push((child, branch.clone()));
            }
            continue;
        }
        if net.step() {
            stack.push((net, w));
            continue;
        }
        leaves += 1;
        if leaves > limit {
            return Err(ExactError::TreeTooLarge { limit });
        }
        let energy = net.energy();
        let slot = acc
            .entry(net.into_events())
            .or_insert_with(|| (T::zero(), 0.0));
        slot.1 += w.to_f64() * energy;
        slot.0 = slot.0.clone() + w;
    }
    let outcomes = acc
        .into_iter()
        .map(|(events, (prob, e))| {
            let pf = prob.to_f64();
            ExactOutcome {
                events,
                energy: if pf > 0.0 { e / pf } else { 0.0 },
                prob,
            }
        })
        .collect();
    Ok(ExactDistribution { outcomes, leaves })
}
