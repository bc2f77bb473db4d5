use crate::chain::{EventKind, InvalidComposition, NodeComposition};
use crate::scalar::{is_zero, powu, sum, Accumulator, Binomials, Scalar};

use super::table::CondCcaTable;
use super::EngineError;

/// Largest tolerated deviation of the four residual probabilities from 1.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

/// Per-node state at `f_m` of a node that has not delivered its packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProbs<T> {
    /// Dropped after `B_max` busy CCAs.
    pub p_fcca: T,
    /// Dropped after `T_max` failed attempts.
    pub p_frtx: T,
    /// Active and took part in the last event.
    pub p_ap: T,
    /// Active and did not take part in the last event.
    pub p_anp: T,
    /// Part of `p_frtx`: dropped by taking part in the last event.
    pub p_pd: T,
}

impl<T: Scalar> ResidualProbs<T> {
    pub fn dropped(&self) -> T {
        self.p_fcca.clone() + self.p_frtx.clone()
    }

    pub fn total(&self) -> T {
        sum([
            self.p_fcca.clone(),
            self.p_frtx.clone(),
            self.p_ap.clone(),
            self.p_anp.clone(),
        ])
    }
}

pub fn residual_probs<T: Scalar>(table: &CondCcaTable<T>) -> Result<ResidualProbs<T>, EngineError> {
    let f = table.finish() as usize;
    let b_max = table.b_max();
    let t_max = table.t_max();
    let t_m = table.last_start() as usize;
    let failed_last = table.last_kind() == EventKind::Failure;

    let mut fcca = Accumulator::new();
    let mut frtx = Accumulator::new();
    let mut ap = Accumulator::new();
    let mut pd = Accumulator::new();
    let mut anp = Accumulator::new();
    for s in table.states() {
        let plane = table.plane(s);
        for (t, m) in plane.iter().enumerate() {
            if is_zero(m) {
                continue;
            }
            if t >= f {
                anp.add(m.clone());
                continue;
            }
            if failed_last && t == t_m {
                if s.attempt == t_max {
                    pd.add(m.clone());
                    frtx.add(m.clone());
                } else {
                    ap.add(m.clone());
                }
            } else if table.is_busy(t as u64) {
                if s.stage == b_max {
                    fcca.add(m.clone());
                }
            } else if s.attempt == t_max {
                frtx.add(m.clone());
            }
        }
    }
    let r = ResidualProbs {
        p_fcca: fcca.value(),
        p_frtx: frtx.value(),
        p_ap: ap.value(),
        p_anp: anp.value(),
        p_pd: pd.value(),
    };
    let dev = (r.total().to_f64() - 1.0).abs();
    if dev > RESIDUAL_TOLERANCE {
        return Err(EngineError::NormalizationViolation { sum: r.total().to_f64() });
    }
    Ok(r)
}

/// Probability of every composition `[n_p, n_np, n_d]` of the residual nodes.
///
/// After a success nobody can be a participant and the split of active and
/// dropped nodes is binomial. After a collision the nodes are exchangeable
/// with four outcomes (active participant, dropped participant, active
/// non-participant, other drop), conditioned on the collision having had at
/// least two residual participants.
#[derive(Debug, Clone)]
pub struct CompositionDist<T> {
    n_r: usize,
    // weight[n_p][n_np], n_d implied
    weight: Vec<Vec<T>>,
}

impl<T: Scalar> CompositionDist<T> {
    pub fn new(
        n_r: usize,
        kind: EventKind,
        r: &ResidualProbs<T>,
        binom: &Binomials<T>,
    ) -> Result<Self, EngineError> {
        let mut weight = vec![vec![T::zero(); n_r + 1]; n_r + 1];
        match kind {
            EventKind::Success => {
                let d = r.dropped();
                for n_np in 0..=n_r {
                    weight[0][n_np] = binom.choose(n_r, n_np)
                        * powu(&r.p_anp, n_np as u32)
                        * powu(&d, (n_r - n_np) as u32);
                }
            }
            EventKind::Failure => {
                let other = (r.dropped() - r.p_pd.clone()).clamp_non_negative();
                let mut z = Accumulator::new();
                for n_p in 0..=n_r {
                    for n_np in 0..=n_r - n_p {
                        let n_d = n_r - n_p - n_np;
                        let mut acc = Accumulator::new();
                        for n_pd in 0..=n_d {
                            if n_p + n_pd < 2 {
                                continue;
                            }
                            let coef = binom.trinomial(n_r, n_p, n_np) * binom.choose(n_d, n_pd);
                            acc.add(
                                coef * powu(&r.p_ap, n_p as u32)
                                    * powu(&r.p_anp, n_np as u32)
                                    * powu(&r.p_pd, n_pd as u32)
                                    * powu(&other, (n_d - n_pd) as u32),
                            );
                        }
                        let w = acc.value();
                        z.add(w.clone());
                        weight[n_p][n_np] = w;
                    }
                }
                let z = z.value();
                if is_zero(&z) {
                    return Err(EngineError::InconsistentChain);
                }
                for row in &mut weight {
                    for w in row.iter_mut() {
                        if !is_zero(w) {
                            *w = w.clone() / z.clone();
                        }
                    }
                }
            }
        }
        Ok(Self { n_r, weight })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn prob(&self, comp: NodeComposition) -> Result<T, InvalidComposition> {
        NodeComposition::new(comp.n_p, comp.n_np, comp.n_d, self.n_r)?;
        Ok(self.weight[comp.n_p][comp.n_np].clone())
    }

    /// Compositions with positive probability, as `(n_p, n_np, weight)`.
    pub(crate) fn support(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        self.weight.iter().enumerate().flat_map(|(n_p, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, w)| !is_zero(*w))
                .map(move |(n_np, w)| (n_p, n_np, w))
        })
    }
}

/// `P{N = comp | c}` for a single composition.
pub fn composition_prob<T: Scalar>(
    kind: EventKind,
    residuals: &ResidualProbs<T>,
    comp: NodeComposition,
) -> Result<T, EngineError> {
    let n_r = comp.n_p + comp.n_np + comp.n_d;
    let binom = Binomials::new(n_r);
    let dist = CompositionDist::new(n_r, kind, residuals, &binom)?;
    Ok(dist.prob(comp)?)
}

/// `P{no_txs | c}`: every residual node has dropped its packet.
pub fn no_txs_prob<T: Scalar>(
    kind: EventKind,
    residuals: &ResidualProbs<T>,
    n_r: usize,
) -> Result<T, EngineError> {
    composition_prob(kind, residuals, NodeComposition { n_p: 0, n_np: 0, n_d: n_r })
}
