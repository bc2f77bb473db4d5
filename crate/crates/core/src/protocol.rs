//! Direct model of the unslotted CSMA/CA procedure on the slot grid.
//!
//! [`Network`] advances all nodes from `t = 0` until every node has
//! delivered or dropped its packet. Backoff draws are supplied by the caller,
//! which lets the simulator sample them and the exact enumerator branch on
//! them.

use serde::{Deserialize, Serialize};

use crate::chain::{make_event, Event, EventKind};
use crate::energy::{ActivityCosts, RadioLedger};
use crate::params::DerivedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeResult {
    /// Delivered; the transmission finished at this instant (symbols).
    Delivered(u64),
    DroppedCca,
    DroppedRetry,
}

#[derive(Debug, Clone)]
struct Node {
    stage: usize,
    attempt: usize,
    /// Next CCA slot once the pending backoff is drawn.
    base: u64,
    next: Option<u64>,
    result: Option<NodeResult>,
    ledger: RadioLedger,
    // end of radio activity, symbols
    end: u64,
}

/// A pending backoff draw: node index and window size in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub node: usize,
    pub window: u64,
}

#[derive(Debug, Clone)]
pub struct Network<'m> {
    model: &'m DerivedModel,
    costs: ActivityCosts,
    nodes: Vec<Node>,
    events: Vec<Event>,
}

impl<'m> Network<'m> {
    pub fn new(model: &'m DerivedModel) -> Self {
        let node = Node {
            stage: 1,
            attempt: 1,
            base: 0,
            next: None,
            result: None,
            ledger: RadioLedger::default(),
            end: 0,
        };
        Self {
            model,
            costs: ActivityCosts::new(model.timing()),
            nodes: vec![node; model.n_nodes()],
            events: Vec::new(),
        }
    }

    /// The lowest-indexed node waiting for a backoff draw.
    pub fn pending_draw(&self) -> Option<Draw> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            (n.result.is_none() && n.next.is_none()).then(|| Draw {
                node: i,
                window: self.model.window(n.stage),
            })
        })
    }

    /// Resolves `node`'s pending backoff to `w` slots.
    pub fn apply_draw(&mut self, node: usize, w: u64) {
        let n = &mut self.nodes[node];
        debug_assert!(n.next.is_none() && w < self.model.window(n.stage));
        n.next = Some(n.base + w);
    }

    /// Runs the CCAs of the earliest pending slot. Returns `false` when no
    /// node is left active. All draws must be resolved first.
    pub fn step(&mut self) -> bool {
        debug_assert!(self.pending_draw().is_none());
        let Some(t) = self.nodes.iter().filter_map(|n| n.next).min() else {
            return false;
        };
        let group: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].next == Some(t))
            .collect();
        let d_bp = self.model.timing().d_bp;
        let at = t * d_bp;
        let busy = self
            .events
            .last()
            .is_some_and(|e| at > e.start && at < e.finish);
        let c = self.costs;
        let m = self.model;

        if busy {
            for &i in &group {
                let n = &mut self.nodes[i];
                n.next = None;
                n.ledger.rx += c.cca_rx;
                if n.stage == m.b_max {
                    n.result = Some(NodeResult::DroppedCca);
                    n.end = at + c.cca_rx as u64;
                } else {
                    n.stage += 1;
                    n.base = t + m.grid.cca_step;
                }
            }
            return true;
        }

        let kind = if group.len() == 1 {
            EventKind::Success
        } else {
            EventKind::Failure
        };
        let event = make_event(m, kind, at);
        self.events.push(event);
        for &i in &group {
            let n = &mut self.nodes[i];
            n.next = None;
            n.ledger.rx += c.cca_rx;
            match kind {
                EventKind::Success => {
                    n.ledger.rx += c.success_rx;
                    n.ledger.tx += c.success_tx;
                    n.end = at + (c.cca_rx + c.success_rx + c.success_tx) as u64;
                    n.result = Some(NodeResult::Delivered(event.finish));
                }
                EventKind::Failure => {
                    n.ledger.rx += c.failure_rx;
                    n.ledger.tx += c.failure_tx;
                    if n.attempt == m.t_max {
                        n.result = Some(NodeResult::DroppedRetry);
                        n.end = at + (c.cca_rx + c.failure_rx + c.failure_tx) as u64;
                    } else {
                        n.attempt += 1;
                        n.stage = 1;
                        n.base = t + m.grid.rtx;
                    }
                }
            }
        }
        true
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Per-node results, `None` for nodes still active.
    pub fn results(&self) -> Vec<Option<NodeResult>> {
        self.nodes.iter().map(|n| n.result).collect()
    }

    /// Radio ledger of every node over `[0, horizon]`, where the horizon is
    /// the end of the last radio activity. Backoff gaps are idle.
    pub fn ledgers(&self) -> Vec<RadioLedger> {
        let horizon = self.nodes.iter().map(|n| n.end).max().unwrap_or(0) as f64;
        self.nodes
            .iter()
            .map(|n| {
                let mut l = n.ledger;
                l.idle = n.end as f64 - l.tx - l.rx;
                l.off = horizon - n.end as f64;
                l
            })
            .collect()
    }

    /// Total energy of all nodes, joules.
    pub fn energy(&self) -> f64 {
        let (e, t) = (&self.model.config.energy, self.model.timing());
        self.ledgers().iter().map(|l| l.joules(e, t)).sum()
    }
}
