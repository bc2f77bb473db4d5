//! Unconditional CCA schedules.
//!
//! `lambda(i, j)` is the set of instants at which a node can start a CCA in
//! backoff stage `i` of transmission attempt `j`; `omega(t, i, j)` inverts the
//! backoff recursion and returns the CCA instants that can lead to a CCA at
//! `t` in that state.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use crate::params::DerivedModel;

/// Backoff stage `i` (1-based, `<= b_max`) of attempt `j` (1-based, `<= t_max`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateIndex {
    pub stage: usize,
    pub attempt: usize,
}

impl StateIndex {
    pub fn new(stage: usize, attempt: usize) -> Self {
        Self { stage, attempt }
    }

    pub fn is_valid(&self, model: &DerivedModel) -> bool {
        (1..=model.b_max).contains(&self.stage) && (1..=model.t_max).contains(&self.attempt)
    }

    /// Dense index `(i - 1) + (j - 1) * b_max`.
    pub(crate) fn flat(&self, b_max: usize) -> usize {
        (self.stage - 1) + (self.attempt - 1) * b_max
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{},{}", self.stage, self.attempt)
    }
}

/// Strictly increasing set of symbol instants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstantSet(Vec<u64>);

impl InstantSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_unsorted(items: impl IntoIterator<Item = u64>) -> Self {
        let set: BTreeSet<u64> = items.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn contains(&self, t: u64) -> bool {
        self.0.binary_search(&t).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn min(&self) -> Option<u64> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.0.last().copied()
    }
}

impl fmt::Display for InstantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, t) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("}")
    }
}

/// Memoised `lambda` sets of one model. Sets are built lazily on first use
/// and are read-only afterwards.
#[derive(Debug)]
pub struct Schedule<'m> {
    model: &'m DerivedModel,
    // Slot indices, per flat state.
    slots: Vec<OnceLock<Vec<u64>>>,
}

impl<'m> Schedule<'m> {
    pub fn new(model: &'m DerivedModel) -> Self {
        let n = model.b_max * model.t_max;
        Self {
            model,
            slots: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    fn lambda_slots(&self, s: StateIndex) -> &[u64] {
        self.slots[s.flat(self.model.b_max)].get_or_init(|| self.build(s))
    }

    fn build(&self, s: StateIndex) -> Vec<u64> {
        let m = self.model;
        let mut out = BTreeSet::new();
        if s.stage == 1 && s.attempt == 1 {
            out.extend(0..m.w1());
        } else if s.stage >= 2 {
            let w = m.window(s.stage);
            for &t in self.lambda_slots(StateIndex::new(s.stage - 1, s.attempt)) {
                out.extend((0..w).map(|k| t + m.grid.cca_step + k));
            }
        } else {
            for i in 1..=m.b_max {
                for &t in self.lambda_slots(StateIndex::new(i, s.attempt - 1)) {
                    out.extend((0..m.w1()).map(|k| t + m.grid.rtx + k));
                }
            }
        }
        out.into_iter().collect()
    }

    /// CCA instants (symbols) of state `s`.
    pub fn lambda(&self, s: StateIndex) -> InstantSet {
        assert!(s.is_valid(self.model), "state {s} out of range");
        let d_bp = self.model.timing().d_bp;
        InstantSet(self.lambda_slots(s).iter().map(|&t| t * d_bp).collect())
    }

    /// Predecessor CCA instants (symbols) of a CCA at `t` in state `s`.
    pub fn omega(&self, t: u64, s: StateIndex) -> InstantSet {
        assert!(s.is_valid(self.model), "state {s} out of range");
        let m = self.model;
        let d_bp = m.timing().d_bp;
        if t % d_bp != 0 || (s.stage == 1 && s.attempt == 1) {
            return InstantSet::empty();
        }
        let slot = t / d_bp;
        let (offset, w, sources): (u64, u64, Vec<StateIndex>) = if s.stage >= 2 {
            (
                m.grid.cca_step,
                m.window(s.stage),
                vec![StateIndex::new(s.stage - 1, s.attempt)],
            )
        } else {
            (
                m.grid.rtx,
                m.w1(),
                (1..=m.b_max)
                    .map(|i| StateIndex::new(i, s.attempt - 1))
                    .collect(),
            )
        };
        // t = t* + offset + k with k < w  <=>  t* in [slot - offset - w + 1, slot - offset]
        let Some(hi) = slot.checked_sub(offset) else {
            return InstantSet::empty();
        };
        let lo = (hi + 1).saturating_sub(w);
        let mut out = BTreeSet::new();
        for src in sources {
            let lam = self.lambda_slots(src);
            let start = lam.partition_point(|&x| x < lo);
            out.extend(lam[start..].iter().take_while(|&&x| x <= hi).map(|&x| x * d_bp));
        }
        InstantSet(out.into_iter().collect())
    }
}

/// One-shot `lambda` for callers without a [`Schedule`].
pub fn lambda_set(model: &DerivedModel, s: StateIndex) -> InstantSet {
    Schedule::new(model).lambda(s)
}

/// One-shot `omega` for callers without a [`Schedule`].
pub fn omega_set(model: &DerivedModel, t: u64, s: StateIndex) -> InstantSet {
    Schedule::new(model).omega(t, s)
}
