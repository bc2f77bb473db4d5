use crate::chain::{Event, EventKind};
use crate::params::DerivedModel;
use crate::schedule::InstantSet;

const BUSY: u8 = 1;
const FAIL_START: u8 = 2;
const SUCCESS_START: u8 = 4;

/// Slot-indexed view of the channel over `[0, f_m)` implied by a chain.
///
/// `busy(t)` holds when a CCA at `t` would find some event's transmission in
/// progress (`t` in `[t_i + 1, f_i)` slots); `fail_start(t)` when a collision
/// started at `t`.
#[derive(Debug, Clone)]
pub struct ChannelHistory {
    flags: Vec<u8>,
    last_start: u64,
    last_kind: EventKind,
}

impl ChannelHistory {
    /// `events` must be non-empty and chronologically ordered.
    pub fn new(model: &DerivedModel, events: &[Event]) -> Self {
        let d_bp = model.timing().d_bp;
        let last = events.last().expect("history of an empty chain");
        let horizon = (last.finish / d_bp) as usize;
        let mut flags = vec![0u8; horizon];
        for e in events {
            let start = (e.start / d_bp) as usize;
            let finish = (e.finish / d_bp) as usize;
            flags[start] |= match e.kind {
                EventKind::Success => SUCCESS_START,
                EventKind::Failure => FAIL_START,
            };
            for f in &mut flags[start + 1..finish] {
                *f |= BUSY;
            }
        }
        Self {
            flags,
            last_start: last.start / d_bp,
            last_kind: last.kind,
        }
    }

    /// `f_m` in slots.
    pub fn finish(&self) -> u64 {
        self.flags.len() as u64
    }

    /// `t_m` in slots.
    pub fn last_start(&self) -> u64 {
        self.last_start
    }

    pub fn last_kind(&self) -> EventKind {
        self.last_kind
    }

    pub fn busy(&self, t: u64) -> bool {
        self.flag(t) & BUSY != 0
    }

    pub fn fail_start(&self, t: u64) -> bool {
        self.flag(t) & FAIL_START != 0
    }

    pub fn success_start(&self, t: u64) -> bool {
        self.flag(t) & SUCCESS_START != 0
    }

    /// A surviving node may have performed a CCA at `t`: the instant is at or
    /// past `f_m`, inside a busy period, or the start of a collision.
    pub fn admissible(&self, t: u64) -> bool {
        t >= self.finish() || self.flag(t) & (BUSY | FAIL_START) != 0
    }

    fn flag(&self, t: u64) -> u8 {
        self.flags.get(t as usize).copied().unwrap_or(0)
    }
}

/// Instants (symbols) before `f_m` at which no residual node can have started
/// a CCA: neither busy nor the start of a collision.
pub fn infeasible_set(model: &DerivedModel, events: &[Event]) -> InstantSet {
    if events.is_empty() {
        return InstantSet::empty();
    }
    let h = ChannelHistory::new(model, events);
    let d_bp = model.timing().d_bp;
    InstantSet::from_unsorted((0..h.finish()).filter(|&t| !h.admissible(t)).map(|t| t * d_bp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::make_event;
    use crate::params::ModelConfig;

    #[test]
    fn success_at_zero() {
        let m = ModelConfig::new(3).derive().unwrap();
        let e = make_event(&m, EventKind::Success, 0);
        let h = ChannelHistory::new(&m, &[e]);
        assert_eq!(h.finish(), 16);
        assert!(!h.busy(0) && h.busy(1) && h.busy(15) && !h.busy(16));
        let np = infeasible_set(&m, &[e]);
        assert_eq!(np.as_slice(), &[0]);
    }

    #[test]
    fn failure_start_is_admissible() {
        let m = ModelConfig::new(3).derive().unwrap();
        let e = make_event(&m, EventKind::Failure, 0);
        assert!(!infeasible_set(&m, &[e]).contains(0));
        assert!(infeasible_set(&m, &[e]).is_empty());
    }

    #[test]
    fn gaps_between_events_are_infeasible() {
        let m = ModelConfig::new(3).derive().unwrap();
        let a = make_event(&m, EventKind::Failure, 40);
        let b = make_event(&m, EventKind::Success, a.finish + 3 * 20);
        let np = infeasible_set(&m, &[a, b]);
        let slots: Vec<u64> = np.iter().map(|t| t / 20).collect();
        // before a, the gap [17, 20) between the events, and b's own start
        assert_eq!(slots, vec![0, 1, 17, 18, 19, 20]);
        assert!(infeasible_set(&m, &[]).is_empty());
    }
}
