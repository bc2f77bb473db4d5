use crate::chain::{make_event, Event, EventKind};
use crate::params::DerivedModel;
use crate::scalar::{is_zero, powu, Accumulator, Binomials, Scalar};

use super::residual::{CompositionDist, ResidualProbs};
use super::table::CondCcaTable;

/// First events after `t = 0`: a success or collision at each slot of the
/// first backoff window, with zero-probability entries omitted.
pub fn initial_events<T: Scalar>(model: &DerivedModel) -> Vec<(Event, T)> {
    let n = model.n_nodes();
    let w = model.w1();
    let binom = Binomials::<T>::new(n);
    let q = T::from_ratio(1, w);
    let mut out = Vec::new();
    for i in 0..w {
        let later = T::from_ratio(w - i - 1, w);
        let start = model.slot_to_symbols(i);
        let success = T::from_count(n as u64) * q.clone() * powu(&later, n as u32 - 1);
        if !is_zero(&success) {
            out.push((make_event(model, EventKind::Success, start), success));
        }
        let mut acc = Accumulator::new();
        for k in 2..=n {
            acc.add(
                binom.choose(n, k) * powu(&q, k as u32) * powu(&later, (n - k) as u32),
            );
        }
        let failure = acc.value();
        if !is_zero(&failure) {
            out.push((make_event(model, EventKind::Failure, start), failure));
        }
    }
    out
}

/// First-CCA distribution over slots `f_m + k`, `k` in `[0, M]`, of one node
/// class, with survival `after[k] = P{first CCA > k}`.
struct LandingPmf<T> {
    at: Vec<T>,
    after: Vec<T>,
}

impl<T: Scalar> LandingPmf<T> {
    fn new(at: Vec<T>) -> Self {
        let mut after = vec![T::zero(); at.len()];
        let mut acc = Accumulator::new();
        for k in (0..at.len()).rev() {
            after[k] = acc.value();
            acc.add(at[k].clone());
        }
        Self { at, after }
    }
}

/// For `n` i.i.d. nodes of one class at offset `k`: `none[n]` all land later,
/// `one[n]` exactly one lands at `k` and the rest later, `any[n]` at least
/// one lands at `k` with none earlier, `many[n]` at least two at `k` with
/// none earlier.
struct ClassTerms<T> {
    none: Vec<T>,
    one: Vec<T>,
    any: Vec<T>,
    many: Vec<T>,
    reach: Vec<T>,
}

impl<T: Scalar> ClassTerms<T> {
    fn new(g: &T, big_g: &T, n_max: usize) -> Self {
        let a = g.clone() + big_g.clone();
        let mut none = vec![T::one(); n_max + 1];
        let mut reach = vec![T::one(); n_max + 1];
        let mut one = vec![T::zero(); n_max + 1];
        let mut any = vec![T::zero(); n_max + 1];
        let mut many = vec![T::zero(); n_max + 1];
        for n in 1..=n_max {
            none[n] = none[n - 1].clone() * big_g.clone();
            reach[n] = reach[n - 1].clone() * a.clone();
            one[n] = T::from_count(n as u64) * g.clone() * none[n - 1].clone();
            any[n] = g.clone() * reach[n - 1].clone() + big_g.clone() * any[n - 1].clone();
            many[n] = g.clone() * any[n - 1].clone() + big_g.clone() * many[n - 1].clone();
        }
        Self {
            none,
            one,
            any,
            many,
            reach,
        }
    }
}

/// Events that can follow the chain's last event, marginalised over the
/// composition of residual nodes.
pub fn next_event_probs<T: Scalar>(
    model: &DerivedModel,
    table: &CondCcaTable<T>,
    residuals: &ResidualProbs<T>,
    comps: &CompositionDist<T>,
) -> Vec<(Event, T)> {
    let f = table.finish();
    let m = table.horizon() - f;
    let len = m as usize + 1;
    let n_r = comps.n_r();

    let np_at: Vec<T> = if is_zero(&residuals.p_anp) {
        vec![T::zero(); len]
    } else {
        (0..len as u64)
            .map(|k| table.marginal(f + k) / residuals.p_anp.clone())
            .collect()
    };
    let np = LandingPmf::new(np_at);

    let mut p_at = vec![T::zero(); len];
    if table.last_kind() == EventKind::Failure {
        let w1 = model.w1();
        let first = table.last_start() + model.grid.rtx - f;
        let q = T::from_ratio(1, w1);
        for k in first..first + w1 {
            p_at[k as usize] = q.clone();
        }
    }
    let p = LandingPmf::new(p_at);

    let support: Vec<(usize, usize, T)> =
        comps.support().map(|(a, b, w)| (a, b, w.clone())).collect();
    let mut out = Vec::new();
    for k in 0..len {
        let tp = ClassTerms::new(&p.at[k], &p.after[k], n_r);
        let tn = ClassTerms::new(&np.at[k], &np.after[k], n_r);
        let mut succ = Accumulator::new();
        let mut fail = Accumulator::new();
        for (n_p, n_np, w) in &support {
            let (n_p, n_np) = (*n_p, *n_np);
            if n_p + n_np == 0 {
                continue;
            }
            let s = tn.one[n_np].clone() * tp.none[n_p].clone()
                + tp.one[n_p].clone() * tn.none[n_np].clone();
            let fl = tp.none[n_p].clone() * tn.many[n_np].clone()
                + tp.one[n_p].clone() * tn.any[n_np].clone()
                + tp.many[n_p].clone() * tn.reach[n_np].clone();
            succ.add(w.clone() * s);
            fail.add(w.clone() * fl);
        }
        let start = model.slot_to_symbols(f + k as u64);
        let succ = succ.value().clamp_non_negative();
        let fail = fail.value().clamp_non_negative();
        if !is_zero(&succ) {
            out.push((make_event(model, EventKind::Success, start), succ));
        }
        if !is_zero(&fail) {
            out.push((make_event(model, EventKind::Failure, start), fail));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use num_rational::BigRational;

    /// Independent oracle: walk all `W^N` joint first draws.
    fn brute_initial(n: u32, w: u64) -> Vec<(EventKind, u64, BigRational)> {
        let total = w.pow(n);
        let mut counts = std::collections::BTreeMap::new();
        for code in 0..total {
            let mut draws = Vec::new();
            let mut c = code;
            for _ in 0..n {
                draws.push(c % w);
                c /= w;
            }
            let min = *draws.iter().min().unwrap();
            let at_min = draws.iter().filter(|&&d| d == min).count();
            let kind = if at_min == 1 {
                EventKind::Success
            } else {
                EventKind::Failure
            };
            *counts.entry((kind, min)).or_insert(0u64) += 1;
        }
        counts
            .into_iter()
            .map(|((k, i), c)| (k, i, BigRational::from_ratio(c, total)))
            .collect()
    }

    #[test]
    fn two_nodes_match_pair_enumeration() {
        let m = ModelConfig::new(2).derive().unwrap();
        let ev = initial_events::<f64>(&m);
        let s0 = ev.iter().find(|(e, _)| e.kind == EventKind::Success && e.start == 0);
        assert_eq!(s0.unwrap().1, 14.0 / 64.0);
        let f3 = ev.iter().find(|(e, _)| e.kind == EventKind::Failure && e.start == 60);
        assert_eq!(f3.unwrap().1, 1.0 / 64.0);
    }

    #[test]
    fn single_node_never_collides() {
        let m = ModelConfig::new(1).derive().unwrap();
        let ev = initial_events::<f64>(&m);
        assert_eq!(ev.len(), 8);
        assert!(ev.iter().all(|(e, p)| e.kind == EventKind::Success && *p == 0.125));
    }

    #[test]
    fn exact_initial_events_match_brute_force() {
        for n in 1..=4 {
            let m = ModelConfig::new(n).derive().unwrap();
            let ev = initial_events::<BigRational>(&m);
            let brute = brute_initial(n, 8);
            assert_eq!(ev.len(), brute.len());
            for (kind, slot, p) in brute {
                let hit = ev
                    .iter()
                    .find(|(e, _)| e.kind == kind && e.start == slot * 20)
                    .expect("event present");
                assert_eq!(hit.1, p);
            }
        }
    }

    #[test]
    fn class_terms_match_closed_forms() {
        let (g, big_g) = (0.2f64, 0.5f64);
        let t = ClassTerms::new(&g, &big_g, 4);
        let a: f64 = g + big_g;
        for n in 0..=4i32 {
            let none = big_g.powi(n);
            let one = if n == 0 { 0.0 } else { n as f64 * g * big_g.powi(n - 1) };
            assert!((t.none[n as usize] - none).abs() < 1e-15);
            assert!((t.one[n as usize] - one).abs() < 1e-15);
            assert!((t.any[n as usize] - (a.powi(n) - none)).abs() < 1e-15);
            let many = a.powi(n) - none - t.one[n as usize];
            assert!((t.many[n as usize] - many).abs() < 1e-15);
        }
    }
}
