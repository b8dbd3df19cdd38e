//! Ancestor-sampling weights for the reference trajectory.

use crate::decomposition::Decomposition;
use crate::graph::{FactorId, Spliced};

/// `A_k = {j : k ≤ j ≤ K, L_{k−1} ∩ I_j ≠ ∅}` for `k = 2..K`: the steps whose
/// factors couple the particle history to the retained reference future.
/// Context variables do not count as history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencySets {
    /// `sets[k - 2]` is `A_k`.
    sets: Vec<Vec<usize>>,
    /// Factors of `A_k` that touch `L_{k−1}`. The rest of `A_k` only sees the
    /// reference and the context, so it shifts every ancestor weight equally.
    coupling: Vec<Vec<FactorId>>,
}

impl DependencySets {
    pub fn compute(d: &Decomposition) -> Self {
        let kmax = d.len();
        let graph = d.graph();
        // first step at which each step's factor scope meets the sampled history:
        // j ∈ A_k iff min entry over scope(j) ≤ k − 1 and j ≥ k
        let earliest: Vec<usize> = d
            .steps()
            .iter()
            .map(|s| {
                s.factor_ids
                    .iter()
                    .flat_map(|&f| graph.factor(f).clique().iter())
                    .map(|&v| d.entry_step(v))
                    .filter(|&e| e != 0)
                    .min()
                    .unwrap_or(usize::MAX)
            })
            .collect();
        let sets = (2..=kmax)
            .map(|k| (k..=kmax).filter(|&j| earliest[j - 1] < k).collect())
            .collect::<Vec<Vec<usize>>>();
        let coupling = sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let k = i + 2;
                set.iter()
                    .flat_map(|&j| d.step(j).factor_ids.iter().copied())
                    .filter(|&f| {
                        graph.factor(f).clique().iter().any(|&v| {
                            let e = d.entry_step(v);
                            e != 0 && e < k
                        })
                    })
                    .collect()
            })
            .collect();
        Self { sets, coupling }
    }

    /// Factors of `A_k` whose value varies with the particle history.
    pub fn coupling_factors(&self, k: usize) -> &[FactorId] {
        if k < 2 {
            &[]
        } else {
            &self.coupling[k - 2]
        }
    }

    /// `A_k` for `k ≥ 2`; empty for `k = 1`.
    pub fn get(&self, k: usize) -> &[usize] {
        if k < 2 {
            &[]
        } else {
            &self.sets[k - 2]
        }
    }

    pub fn max_len(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of sets (`K − 1`).
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Same as [`DependencySets::compute`].
pub fn compute_dependency_sets(d: &Decomposition) -> DependencySets {
    DependencySets::compute(d)
}

/// Unnormalized `log P(a_k^N = i)`:
/// `log w_{k−1}^i + Σ_{j∈A_k} log ψ_j(X̃^i) − log q_{k−1}(X^i)`, where `X̃^i`
/// joins particle `i`'s history on `L_{k−1}` with the reference elsewhere.
pub fn ancestor_log_weights(
    d: &Decomposition,
    k: usize,
    particles: &[f64],
    width: usize,
    prev_log_weights: &[f64],
    reference: &[f64],
    deps: &DependencySets,
) -> Vec<f64> {
    let mut out = vec![0.0; prev_log_weights.len()];
    ancestor_log_weights_into(
        d,
        k,
        particles,
        width,
        prev_log_weights,
        reference,
        deps,
        &mut out,
    );
    out
}

pub(crate) fn ancestor_log_weights_into(
    d: &Decomposition,
    k: usize,
    particles: &[f64],
    width: usize,
    prev_log_weights: &[f64],
    reference: &[f64],
    deps: &DependencySets,
    out: &mut [f64],
) {
    fill_ancestor_log_weights(
        d,
        k,
        particles,
        width,
        prev_log_weights,
        reference,
        out,
        |src| deps.get(k).iter().map(|&j| d.log_psi(j, src)).sum(),
    );
}

/// Same as [`ancestor_log_weights`] up to a shift shared by every particle:
/// only the factors that see the history are evaluated.
pub(crate) fn reduced_ancestor_log_weights_into(
    d: &Decomposition,
    k: usize,
    particles: &[f64],
    width: usize,
    prev_log_weights: &[f64],
    reference: &[f64],
    deps: &DependencySets,
    out: &mut [f64],
) {
    let ids = deps.coupling_factors(k);
    let graph = d.graph();
    fill_ancestor_log_weights(
        d,
        k,
        particles,
        width,
        prev_log_weights,
        reference,
        out,
        |src| graph.log_factors(ids, src),
    );
}

fn fill_ancestor_log_weights(
    d: &Decomposition,
    k: usize,
    particles: &[f64],
    width: usize,
    prev_log_weights: &[f64],
    reference: &[f64],
    out: &mut [f64],
    future: impl Fn(&Spliced<'_>) -> f64,
) {
    let mask = d.prefix_mask(k - 1);
    for (i, o) in out.iter_mut().enumerate() {
        let lw = prev_log_weights[i];
        if lw == f64::NEG_INFINITY {
            *o = lw;
            continue;
        }
        let head = &particles[i * width..(i + 1) * width];
        let src = Spliced {
            head,
            tail: reference,
            in_head: &mask,
        };
        let mut acc = lw + future(&src);
        if d.is_twisted() {
            acc -= d.log_twist(k - 1, head);
        }
        *o = if acc.is_nan() { f64::NEG_INFINITY } else { acc };
    }
}
