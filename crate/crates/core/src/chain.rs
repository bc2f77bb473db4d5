//! Events, event chains and residual-node compositions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::DerivedModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Success,
    Failure,
}

impl EventKind {
    pub fn tag(&self) -> char {
        match self {
            EventKind::Success => 'S',
            EventKind::Failure => 'F',
        }
    }
}

/// A transmission seen on the channel. `start` is the CCA instant of the
/// node(s) causing it, `finish` the first instant at which a new CCA can find
/// the channel clear. Both are in symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub start: u64,
    pub finish: u64,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind.tag(), self.start)
    }
}

/// Builds the event of `kind` whose CCA starts at `start` (symbols, on the
/// slot grid). A success occupies the channel through the ACK; a collision
/// only through the colliding frames.
pub fn make_event(model: &DerivedModel, kind: EventKind, start: u64) -> Event {
    let t = model.timing();
    debug_assert_eq!(start % t.d_bp, 0, "event start off the slot grid");
    let span = match kind {
        EventKind::Success => t.success_span(),
        EventKind::Failure => t.failure_span(),
    };
    Event {
        kind,
        start,
        finish: start + t.align_up(span),
    }
}

#[derive(Debug)]
struct Link {
    event: Event,
    parent: Option<Arc<Link>>,
}

/// Persistent event sequence with its aggregate probability. Extending a
/// chain shares the parent's links.
#[derive(Debug, Clone)]
pub struct Chain<T> {
    tail: Option<Arc<Link>>,
    len: usize,
    n_success: usize,
    pub prob: T,
    /// Expected total energy of all nodes over `[0, f_m]`, joules.
    /// Only set on finalised chains.
    pub energy: f64,
}

impl<T: Scalar> Chain<T> {
    pub fn root(event: Event, prob: T) -> Self {
        Self {
            tail: Some(Arc::new(Link { event, parent: None })),
            len: 1,
            n_success: usize::from(event.kind == EventKind::Success),
            prob,
            energy: 0.0,
        }
    }

    /// `self` followed by `event`, with probability `self.prob * cond`.
    pub fn extend(&self, event: Event, cond: T) -> Self {
        debug_assert!(self.last().is_none_or(|l| event.start >= l.finish));
        Self {
            tail: Some(Arc::new(Link {
                event,
                parent: self.tail.clone(),
            })),
            len: self.len + 1,
            n_success: self.n_success + usize::from(event.kind == EventKind::Success),
            prob: self.prob.clone() * cond,
            energy: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_success(&self) -> usize {
        self.n_success
    }

    pub fn last(&self) -> Option<Event> {
        self.tail.as_ref().map(|l| l.event)
    }

    /// Events in chronological order.
    pub fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.len);
        let mut cur = self.tail.as_deref();
        while let Some(link) = cur {
            out.push(link.event);
            cur = link.parent.as_deref();
        }
        out.reverse();
        out
    }

    /// Debug dump line: `p=<prob> [S@t1 F@t2 ...]`.
    pub fn dump_line(&self) -> String {
        let events: Vec<String> = self.events().iter().map(|e| e.to_string()).collect();
        format!("p={:e} [{}]", self.prob.to_f64(), events.join(" "))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("composition {n_p}+{n_np}+{n_d} does not partition {n_r} residual nodes")]
pub struct InvalidComposition {
    pub n_p: usize,
    pub n_np: usize,
    pub n_d: usize,
    pub n_r: usize,
}

/// Split of the residual nodes after a chain: active participants of the
/// last event, active non-participants, dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeComposition {
    pub n_p: usize,
    pub n_np: usize,
    pub n_d: usize,
}

impl NodeComposition {
    pub fn new(n_p: usize, n_np: usize, n_d: usize, n_r: usize) -> Result<Self, InvalidComposition> {
        if n_p + n_np + n_d != n_r {
            return Err(InvalidComposition { n_p, n_np, n_d, n_r });
        }
        Ok(Self { n_p, n_np, n_d })
    }

    pub fn active(&self) -> usize {
        self.n_p + self.n_np
    }

    /// Every composition of `n_r` nodes, participants first.
    pub fn all(n_r: usize) -> impl Iterator<Item = NodeComposition> {
        (0..=n_r).flat_map(move |n_p| {
            (0..=n_r - n_p).map(move |n_np| NodeComposition {
                n_p,
                n_np,
                n_d: n_r - n_p - n_np,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;

    #[test]
    fn finish_times() {
        let m = ModelConfig::new(2).derive().unwrap();
        let s = make_event(&m, EventKind::Success, 0);
        assert_eq!(s.finish, 320);
        let f = make_event(&m, EventKind::Failure, 40);
        assert_eq!(f.finish, 40 + 300);
    }

    #[test]
    fn aligned_busy_period_is_a_no_op() {
        let mut cfg = ModelConfig::new(2);
        cfg.timing.d_tx = 280; // 8 + 12 + 280 = 300
        let m = cfg.derive().unwrap();
        assert_eq!(make_event(&m, EventKind::Failure, 20).finish, 320);
    }

    #[test]
    fn chain_extension_shares_prefix() {
        let m = ModelConfig::new(3).derive().unwrap();
        let a = Chain::root(make_event(&m, EventKind::Failure, 0), 0.5f64);
        let b = a.extend(make_event(&m, EventKind::Success, 340), 0.25);
        let c = a.extend(make_event(&m, EventKind::Failure, 360), 0.5);
        assert_eq!(b.len(), 2);
        assert_eq!(b.n_success(), 1);
        assert_eq!(c.n_success(), 0);
        assert_eq!(b.prob, 0.125);
        assert_eq!(b.dump_line(), "p=1.25e-1 [F@0 S@340]");
        assert_eq!(c.events()[0], a.events()[0]);
    }

    #[test]
    fn compositions_partition() {
        assert!(NodeComposition::new(1, 1, 1, 4).is_err());
        let all: Vec<_> = NodeComposition::all(3).collect();
        assert_eq!(all.len(), 10);
        assert!(all.iter().all(|c| c.n_p + c.n_np + c.n_d == 3));
    }
}
