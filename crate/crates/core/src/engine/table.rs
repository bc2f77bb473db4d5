use crate::chain::EventKind;
use crate::params::{Conditioning, DerivedModel};
use crate::scalar::{is_zero, Accumulator, Scalar};
use crate::schedule::StateIndex;

use super::history::ChannelHistory;
use super::EngineError;

/// Largest offset, in slots past `f_m`, at which a new event can start.
///
/// A node that found the channel busy in its last slot can back off for up to
/// `W_{B_max} - 1` more slots; after a collision the participants retry after
/// the timeout, within `[f_m + 2, f_m + 2 + W_1 - 1]`. When the first backoff
/// window or the CCA step is long enough to reach further, the bound is
/// extended to cover it.
pub fn max_offset(model: &DerivedModel, last: EventKind, finish_slot: u64) -> u64 {
    let w_last = model.w_last();
    let w1 = model.w1();
    let mut m = match last {
        EventKind::Success => w_last - 1,
        EventKind::Failure => (w_last - 1).max(2 + (w1 - 1)),
    };
    if model.b_max >= 2 {
        // busy CCA in slot f_m - 1 lands at most step + W - 2 past f_m
        m = m.max(model.grid.cca_step + w_last - 2);
    }
    if last == EventKind::Failure {
        let retry_gap = model.grid.rtx - model.grid.failure_len;
        m = m.max(retry_gap + w1 - 1);
    }
    m.max((w1 - 1).saturating_sub(finish_slot))
}

/// Conditional CCA probabilities of one residual node given a chain.
///
/// `at(s, t)` is the probability that the node performs (or performed) a CCA
/// at slot `t` in state `s`. Retries of the last event's collision
/// participants are excluded from the table and accounted as participant mass
/// instead.
#[derive(Debug, Clone)]
pub struct CondCcaTable<T> {
    b_max: usize,
    t_max: usize,
    finish: u64,
    last_start: u64,
    last_kind: EventKind,
    horizon: u64,
    history: ChannelHistory,
    mass: Vec<Vec<T>>,
    /// Mass discarded at dead ends before renormalisation (one-step rule only).
    discarded: T,
}

impl<T: Scalar> CondCcaTable<T> {
    pub fn build(model: &DerivedModel, history: &ChannelHistory) -> Result<Self, EngineError> {
        let b_max = model.b_max;
        let t_max = model.t_max;
        let n_states = b_max * t_max;
        let finish = history.finish();
        let last_start = history.last_start();
        let last_kind = history.last_kind();
        let horizon = finish + max_offset(model, last_kind, finish);
        let len = horizon as usize + 1;
        let step = model.grid.cca_step;
        let rtx = model.grid.rtx;
        let w1 = model.w1();

        let weights = FeasibilityWeights::<T>::new(model, history, horizon);
        let mut mass: Vec<Vec<T>> = vec![vec![T::zero(); len]; n_states];

        let s11 = StateIndex::new(1, 1).flat(b_max);
        let first: Vec<(u64, T)> = (0..w1)
            .map(|t| (t, weights.get(s11, t)))
            .filter(|(_, w)| !is_zero(w))
            .collect();
        let norm = crate::scalar::sum(first.iter().map(|(_, w)| w.clone()));
        if is_zero(&norm) {
            return Err(EngineError::InconsistentChain);
        }
        for (t, w) in first {
            mass[s11][t as usize] = w / norm.clone();
        }

        let mut discarded = Accumulator::<T>::new();
        for t in 0..finish {
            let busy = history.busy(t);
            let fail = history.fail_start(t);
            for j in 1..=t_max {
                for i in 1..=b_max {
                    let s = StateIndex::new(i, j).flat(b_max);
                    let m = mass[s][t as usize].clone();
                    if is_zero(&m) {
                        continue;
                    }
                    let (target, base, width) = if busy {
                        if i == b_max {
                            continue;
                        }
                        (StateIndex::new(i + 1, j), t + step, model.window(i + 1))
                    } else if fail {
                        if j == t_max || (t == last_start && last_kind == EventKind::Failure) {
                            continue;
                        }
                        (StateIndex::new(1, j + 1), t + rtx, w1)
                    } else {
                        debug_assert!(false, "mass at infeasible slot {t}");
                        continue;
                    };
                    let ts = target.flat(b_max);
                    let denom = weights.window_sum(ts, base, width);
                    if is_zero(&denom) {
                        discarded.add(m);
                        continue;
                    }
                    let scale = m / denom;
                    for l in base..base + width {
                        let w = weights.get(ts, l);
                        if !is_zero(&w) {
                            let cell = &mut mass[ts][l as usize];
                            *cell = cell.clone() + scale.clone() * w;
                        }
                    }
                }
            }
        }

        let discarded = discarded.value();
        if !is_zero(&discarded) {
            let kept = T::one() - discarded.clone();
            if kept <= T::zero() {
                return Err(EngineError::InconsistentChain);
            }
            for plane in &mut mass {
                for cell in plane.iter_mut() {
                    if !is_zero(cell) {
                        *cell = cell.clone() / kept.clone();
                    }
                }
            }
        }
        Ok(Self {
            b_max,
            t_max,
            finish,
            last_start,
            last_kind,
            horizon,
            history: history.clone(),
            mass,
            discarded,
        })
    }

    /// `P{CCA_ij^t | c}` at slot `t`.
    pub fn at(&self, s: StateIndex, t: u64) -> T {
        self.mass[s.flat(self.b_max)]
            .get(t as usize)
            .cloned()
            .unwrap_or_else(T::zero)
    }

    /// `P{CCA^t | c}`: sum over all states.
    pub fn marginal(&self, t: u64) -> T {
        crate::scalar::sum(self.mass.iter().filter_map(|p| p.get(t as usize).cloned()))
    }

    pub(crate) fn plane(&self, s: StateIndex) -> &[T] {
        &self.mass[s.flat(self.b_max)]
    }

    pub fn is_busy(&self, t: u64) -> bool {
        self.history.busy(t)
    }

    pub fn is_fail_start(&self, t: u64) -> bool {
        self.history.fail_start(t)
    }

    pub fn b_max(&self) -> usize {
        self.b_max
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// `f_m` in slots.
    pub fn finish(&self) -> u64 {
        self.finish
    }

    /// `t_m` in slots.
    pub fn last_start(&self) -> u64 {
        self.last_start
    }

    pub fn last_kind(&self) -> EventKind {
        self.last_kind
    }

    /// Probability mass lost at dead ends and renormalised away.
    pub fn discarded(&self) -> T {
        self.discarded.clone()
    }

    /// `S_max` in slots.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn states(&self) -> impl Iterator<Item = StateIndex> + '_ {
        (1..=self.t_max).flat_map(move |j| (1..=self.b_max).map(move |i| StateIndex::new(i, j)))
    }
}

/// Weight of a CCA landing at `(state, t)`.
///
/// One-step: 1 for admissible instants, 0 otherwise. Lookahead: the
/// probability, under the unconditioned backoff draws, that the node's
/// history from that CCA up to `f_m` never touches an inadmissible instant.
struct FeasibilityWeights<T> {
    finish: u64,
    one_step: Option<Vec<bool>>,
    weight: Vec<Vec<T>>,
}

impl<T: Scalar> FeasibilityWeights<T> {
    fn new(model: &DerivedModel, history: &ChannelHistory, horizon: u64) -> Self {
        let b_max = model.b_max;
        let t_max = model.t_max;
        let finish = history.finish();
        if model.config.conditioning == Conditioning::OneStep {
            let admissible = (0..finish).map(|t| history.admissible(t)).collect();
            return Self {
                finish,
                one_step: Some(admissible),
                weight: Vec::new(),
            };
        }

        // Only the region before f_m needs explicit weights; at and past f_m
        // every weight is 1, so suffix sums there are just counts.
        let len = finish as usize;
        let n_states = b_max * t_max;
        let mut weight = vec![vec![T::zero(); len]; n_states];
        // suffix[s][t] = sum of weight[s][u] for u >= t
        let mut suffix = vec![vec![T::zero(); len + 1]; n_states];
        let tail = |t: u64| T::from_count(horizon + 1 - t.min(horizon + 1));
        let step = model.grid.cca_step;
        let rtx = model.grid.rtx;
        let w1 = model.w1();

        for t in (0..finish).rev() {
            let busy = history.busy(t);
            let fail = history.fail_start(t);
            for j in 1..=t_max {
                for i in 1..=b_max {
                    let s = StateIndex::new(i, j).flat(b_max);
                    let w = if busy {
                        if i == b_max {
                            T::one()
                        } else {
                            let ts = StateIndex::new(i + 1, j).flat(b_max);
                            let width = model.window(i + 1);
                            window_avg(&suffix[ts], finish, &tail, t + step, width)
                        }
                    } else if fail {
                        if j == t_max {
                            T::one()
                        } else {
                            let ts = StateIndex::new(1, j + 1).flat(b_max);
                            window_avg(&suffix[ts], finish, &tail, t + rtx, w1)
                        }
                    } else {
                        T::zero()
                    };
                    weight[s][t as usize] = w;
                }
            }
            for s in 0..n_states {
                let next = if t + 1 < finish {
                    suffix[s][t as usize + 1].clone()
                } else {
                    tail(finish)
                };
                suffix[s][t as usize] = next + weight[s][t as usize].clone();
            }
        }
        Self {
            finish,
            one_step: None,
            weight,
        }
    }

    fn get(&self, s: usize, t: u64) -> T {
        if t >= self.finish {
            return T::one();
        }
        match &self.one_step {
            Some(adm) => {
                if adm[t as usize] {
                    T::one()
                } else {
                    T::zero()
                }
            }
            None => self.weight[s][t as usize].clone(),
        }
    }

    /// Sum of weights over `[base, base + width)`.
    fn window_sum(&self, s: usize, base: u64, width: u64) -> T {
        let end = base + width;
        let past = end.saturating_sub(base.max(self.finish));
        let mut acc = Accumulator::<T>::new();
        acc.add(T::from_count(past));
        for t in base..end.min(self.finish) {
            acc.add(self.get(s, t));
        }
        acc.value()
    }
}

/// Mean of `weight` over `[base, base + width)`, using suffix sums that are
/// exact counts at and past `finish`.
fn window_avg<T: Scalar>(
    suffix: &[T],
    finish: u64,
    tail: &impl Fn(u64) -> T,
    base: u64,
    width: u64,
) -> T {
    let at = |t: u64| -> T {
        if t < finish {
            suffix[t as usize].clone()
        } else {
            tail(t)
        }
    };
    (at(base) - at(base + width)) / T::from_count(width)
}
