//! Sequential decompositions of a factor graph into ordered target increments.
//!
//! Step `k` owns a group of factors `C_k`; the intermediate target is
//! `γ_k = q_k ∏_{ℓ≤k} ψ_ℓ` over the variables `L_k` introduced so far. An
//! optional set of *context* variables is held fixed throughout (this is how
//! block-conditional models are expressed).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, Domain, FactorGraph, FactorId, Lattice, Values, VarId};

/// `log q_k` as a function of `(k, values)`, `k` counted from 1.
pub type Twist = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingStrategy {
    LeftRight,
    Diagonal,
    Spiral,
    RandomNeighbour {
        seed: u64,
    },
    /// Rows alternately left-to-right and right-to-left.
    Snake,
    Explicit(Vec<VarId>),
}

impl OrderingStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            OrderingStrategy::LeftRight => "lr",
            OrderingStrategy::Diagonal => "diag",
            OrderingStrategy::Spiral => "spiral",
            OrderingStrategy::RandomNeighbour { .. } => "rndn",
            OrderingStrategy::Snake => "snake",
            OrderingStrategy::Explicit(_) => "explicit",
        }
    }

    /// The variable order this strategy produces on `graph`.
    pub fn variable_order(&self, graph: &FactorGraph) -> Result<Vec<VarId>> {
        let n = graph.num_variables();
        if let OrderingStrategy::Explicit(order) = self {
            check_permutation(order, n)?;
            return Ok(order.clone());
        }
        let lattice = graph.lattice().ok_or(Error::MissingLattice)?;
        Ok(match self {
            OrderingStrategy::LeftRight => (0..n).collect(),
            OrderingStrategy::Diagonal => diagonal_order(lattice),
            OrderingStrategy::Spiral => spiral_order(lattice),
            OrderingStrategy::Snake => snake_order(lattice),
            OrderingStrategy::RandomNeighbour { seed } => random_neighbour_order(lattice, *seed),
            OrderingStrategy::Explicit(_) => unreachable!(),
        })
    }
}

fn check_permutation(order: &[VarId], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidOrder(format!(
            "order lists {} variables, graph has {n}",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || seen[v] {
            return Err(Error::InvalidOrder(format!(
                "variable {v} is out of range or repeated"
            )));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Anti-diagonals from the top-left corner, each walked bottom-left to top-right.
pub fn diagonal_order(l: &Lattice) -> Vec<VarId> {
    let mut out = Vec::with_capacity(l.len());
    for d in 0..(l.rows + l.cols).saturating_sub(1) {
        for r in (0..l.rows).rev() {
            if d >= r && d - r < l.cols {
                out.push(l.id(r, d - r));
            }
        }
    }
    out
}

/// Inward spiral starting at the top-right corner: along the top row to the
/// left, down the left column, along the bottom row, up the right column.
pub fn spiral_order(l: &Lattice) -> Vec<VarId> {
    let mut out = Vec::with_capacity(l.len());
    if l.is_empty() {
        return out;
    }
    let (mut top, mut bottom, mut left, mut right) =
        (0isize, l.rows as isize - 1, 0isize, l.cols as isize - 1);
    let id = |r: isize, c: isize| l.id(r as usize, c as usize);
    while top <= bottom && left <= right {
        for c in (left..=right).rev() {
            out.push(id(top, c));
        }
        for r in top + 1..=bottom {
            out.push(id(r, left));
        }
        if bottom > top {
            for c in left + 1..=right {
                out.push(id(bottom, c));
            }
        }
        if left < right {
            for r in (top + 1..bottom).rev() {
                out.push(id(r, right));
            }
        }
        top += 1;
        bottom -= 1;
        left += 1;
        right -= 1;
    }
    out
}

pub fn snake_order(l: &Lattice) -> Vec<VarId> {
    let mut out = Vec::with_capacity(l.len());
    for r in 0..l.rows {
        if r % 2 == 0 {
            out.extend((0..l.cols).map(|c| l.id(r, c)));
        } else {
            out.extend((0..l.cols).rev().map(|c| l.id(r, c)));
        }
    }
    out
}

/// First node uniform; each later node uniform among unadded nodes with an
/// already-added neighbour (uniform among all unadded nodes if none has one).
pub fn random_neighbour_order(l: &Lattice, seed: u64) -> Vec<VarId> {
    let n = l.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![Vec::new(); n];
    for (a, b) in l.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut added = vec![false; n];
    let mut frontier: BTreeSet<VarId> = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let next = if frontier.is_empty() {
            let rest: Vec<VarId> = (0..n).filter(|&v| !added[v]).collect();
            rest[rng.random_range(0..rest.len())]
        } else {
            let idx = rng.random_range(0..frontier.len());
            *frontier.iter().nth(idx).unwrap()
        };
        added[next] = true;
        frontier.remove(&next);
        for &u in &adj[next] {
            if !added[u] {
                frontier.insert(u);
            }
        }
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionStep {
    /// Step index, from 1.
    pub k: usize,
    /// `C_k`.
    pub factor_ids: Vec<FactorId>,
    /// `I_k`: variables of the clique union together with the variables the
    /// step introduces.
    pub ind: Vec<VarId>,
    /// `ξ_k = I_k \ L_{k−1}`; may be empty.
    pub new_vars: Vec<VarId>,
}

#[derive(Clone)]
pub struct Decomposition {
    graph: Arc<FactorGraph>,
    steps: Vec<DecompositionStep>,
    context: Vec<VarId>,
    /// Step at which each variable enters; 0 for context, `usize::MAX` if never.
    entry: Vec<usize>,
    twist: Option<Twist>,
}

impl fmt::Debug for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decomposition")
            .field("steps", &self.steps)
            .field("context", &self.context)
            .field("twisted", &self.twist.is_some())
            .finish()
    }
}

pub const NEVER: usize = usize::MAX;

impl Decomposition {
    /// One variable per step in the order given by `strategy`; step `k` takes
    /// every unassigned factor whose clique is contained in `L_k`.
    pub fn build(graph: Arc<FactorGraph>, strategy: &OrderingStrategy) -> Result<Self> {
        let order = strategy.variable_order(&graph)?;
        Self::from_variable_order(graph, &order)
    }

    pub fn from_variable_order(graph: Arc<FactorGraph>, order: &[VarId]) -> Result<Self> {
        check_permutation(order, graph.num_variables())?;
        Self::conditional(graph, order, &[])
    }

    /// Decomposition of the conditional model of `order`'s variables given
    /// fixed values of `context`. Only factors touching `order` are used
    /// (`C^m = {C : C ∩ V^m ≠ ∅}`).
    pub fn conditional(
        graph: Arc<FactorGraph>,
        order: &[VarId],
        context: &[VarId],
    ) -> Result<Self> {
        let n = graph.num_variables();
        let mut entry = vec![NEVER; n];
        for &v in context {
            if v >= n {
                return Err(Error::UnknownVariable(v));
            }
            entry[v] = 0;
        }
        for (i, &v) in order.iter().enumerate() {
            if v >= n {
                return Err(Error::UnknownVariable(v));
            }
            if entry[v] != NEVER {
                return Err(Error::InvalidOrder(format!(
                    "variable {v} listed twice or also in context"
                )));
            }
            entry[v] = i + 1;
        }
        let mut steps: Vec<DecompositionStep> = order
            .iter()
            .enumerate()
            .map(|(i, &v)| DecompositionStep {
                k: i + 1,
                factor_ids: Vec::new(),
                ind: vec![v],
                new_vars: vec![v],
            })
            .collect();
        for (f, factor) in graph.factors().iter().enumerate() {
            let clique = factor.clique();
            if clique.iter().all(|&v| entry[v] == 0) {
                continue;
            }
            let last = clique.iter().map(|&v| entry[v]).max().unwrap();
            if last == NEVER {
                if context.is_empty() {
                    unreachable!("permutation covers every variable");
                }
                return Err(Error::InvalidOrder(format!(
                    "factor {f} touches a variable outside block and context"
                )));
            }
            steps[last - 1].factor_ids.push(f);
        }
        for step in &mut steps {
            let mut ind: BTreeSet<VarId> = step.ind.iter().copied().collect();
            for &f in &step.factor_ids {
                ind.extend(graph.factor(f).clique().iter().copied());
            }
            step.ind = ind.into_iter().collect();
        }
        Ok(Self {
            graph,
            steps,
            context: context.to_vec(),
            entry,
            twist: None,
        })
    }

    /// Explicit factor groups; increments are `I_k \ L_{k−1}`. The partition
    /// conditions are not enforced here; see [`Decomposition::validate`].
    pub fn from_factor_groups(graph: Arc<FactorGraph>, groups: Vec<Vec<FactorId>>) -> Result<Self> {
        Self::from_factor_groups_in_context(graph, groups, &[])
    }

    /// As [`Decomposition::from_factor_groups`], holding `context` fixed.
    pub fn from_factor_groups_in_context(
        graph: Arc<FactorGraph>,
        groups: Vec<Vec<FactorId>>,
        context: &[VarId],
    ) -> Result<Self> {
        let groups = groups.into_iter().map(|g| (g, Vec::new())).collect();
        Self::from_steps(graph, groups, context)
    }

    /// Explicit steps, each a factor group plus variables introduced even if
    /// no factor of the group touches them.
    pub fn from_steps(
        graph: Arc<FactorGraph>,
        groups: Vec<(Vec<FactorId>, Vec<VarId>)>,
        context: &[VarId],
    ) -> Result<Self> {
        let n = graph.num_variables();
        let mut entry = vec![NEVER; n];
        for &v in context {
            if v >= n {
                return Err(Error::UnknownVariable(v));
            }
            entry[v] = 0;
        }
        let mut steps = Vec::with_capacity(groups.len());
        for (i, (group, extra)) in groups.into_iter().enumerate() {
            let mut ind = BTreeSet::new();
            for &v in &extra {
                if v >= n {
                    return Err(Error::UnknownVariable(v));
                }
                ind.insert(v);
            }
            for &f in &group {
                if f >= graph.num_factors() {
                    return Err(Error::UnknownFactor(f));
                }
                ind.extend(graph.factor(f).clique().iter().copied());
            }
            let new_vars: Vec<VarId> = ind.iter().copied().filter(|&v| entry[v] == NEVER).collect();
            for &v in &new_vars {
                entry[v] = i + 1;
            }
            steps.push(DecompositionStep {
                k: i + 1,
                factor_ids: group,
                ind: ind.into_iter().collect(),
                new_vars,
            });
        }
        Ok(Self {
            graph,
            steps,
            context: context.to_vec(),
            entry,
            twist: None,
        })
    }

    pub fn with_twist(mut self, twist: Twist) -> Self {
        self.twist = Some(twist);
        self
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<FactorGraph> {
        &self.graph
    }

    /// Number of steps `K`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[DecompositionStep] {
        &self.steps
    }

    /// Step `k`, counted from 1.
    pub fn step(&self, k: usize) -> &DecompositionStep {
        &self.steps[k - 1]
    }

    pub fn context(&self) -> &[VarId] {
        &self.context
    }

    /// Step at which `v` enters (0 for context, [`NEVER`] if it never does).
    pub fn entry_step(&self, v: VarId) -> usize {
        self.entry[v]
    }

    /// `L_k` (context excluded), sorted.
    pub fn cumulative(&self, k: usize) -> Vec<VarId> {
        (0..self.entry.len())
            .filter(|&v| self.entry[v] != 0 && self.entry[v] != NEVER && self.entry[v] <= k)
            .collect()
    }

    /// Mask of `L_k ∪ context`.
    pub fn prefix_mask(&self, k: usize) -> Vec<bool> {
        self.entry.iter().map(|&e| e != NEVER && e <= k).collect()
    }

    /// Variables the decomposition samples, in order of entry.
    pub fn sampled_variables(&self) -> Vec<VarId> {
        self.steps
            .iter()
            .flat_map(|s| s.new_vars.iter().copied())
            .collect()
    }

    /// Whether every step introduces exactly one variable.
    pub fn is_single_site(&self) -> bool {
        self.steps.iter().all(|s| s.new_vars.len() == 1)
    }

    pub fn is_twisted(&self) -> bool {
        self.twist.is_some()
    }

    #[inline]
    pub fn log_twist(&self, k: usize, values: &[f64]) -> f64 {
        match (&self.twist, k) {
            (_, 0) | (None, _) => 0.0,
            (Some(q), _) => q(k, values),
        }
    }

    /// `log ψ_k` on the given values.
    #[inline]
    pub fn log_psi<S: Values + ?Sized>(&self, k: usize, src: &S) -> f64 {
        self.graph.log_factors(&self.steps[k - 1].factor_ids, src)
    }

    /// `log γ_k − log γ_{k−1}` = `log ψ_k + log q_k − log q_{k−1}`.
    #[inline]
    pub fn log_gamma_increment(&self, k: usize, values: &[f64]) -> f64 {
        let psi = self.log_psi(k, values);
        if self.twist.is_some() {
            psi + self.log_twist(k, values) - self.log_twist(k - 1, values)
        } else {
            psi
        }
    }

    /// `log γ_k(X_{L_k})`; requires `L_k` and the context to be assigned.
    pub fn log_gamma(&self, k: usize, a: &Assignment) -> Result<f64> {
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!(
                "step {k} outside 1..={}",
                self.len()
            )));
        }
        for (v, &e) in self.entry.iter().enumerate() {
            if e <= k && !a.is_assigned(v) {
                return Err(Error::MissingVariable(v));
            }
        }
        Ok(self.log_gamma_unchecked(k, a.values()))
    }

    pub fn log_gamma_unchecked(&self, k: usize, values: &[f64]) -> f64 {
        let psi: f64 = (1..=k).map(|l| self.log_psi(l, values)).sum();
        psi + self.log_twist(k, values)
    }

    /// Check the structural conditions of a sequential decomposition.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.graph.num_variables();
        let nf = self.graph.num_factors();
        let mut owner: Vec<Vec<usize>> = vec![Vec::new(); nf];
        for step in &self.steps {
            for &f in &step.factor_ids {
                if f >= nf {
                    report.violations.push(Violation::UnknownFactor {
                        step: step.k,
                        factor: f,
                    });
                } else {
                    owner[f].push(step.k);
                }
            }
        }
        let in_context = {
            let mut m = vec![false; n];
            self.context.iter().for_each(|&v| m[v] = true);
            m
        };
        for (f, steps) in owner.iter().enumerate() {
            let clique = self.graph.factor(f).clique();
            let required = !clique.iter().all(|&v| in_context[v]);
            if steps.len() > 1 {
                report.violations.push(Violation::DuplicateFactor {
                    factor: f,
                    steps: steps.clone(),
                });
            } else if steps.is_empty() && required {
                report
                    .violations
                    .push(Violation::MissingFactor { factor: f });
            }
        }
        let mut assigned = in_context.clone();
        for step in &self.steps {
            let overlap: Vec<VarId> = step
                .new_vars
                .iter()
                .copied()
                .filter(|&v| assigned[v])
                .collect();
            if !overlap.is_empty() {
                report.violations.push(Violation::IncrementOverlap {
                    step: step.k,
                    vars: overlap,
                });
            }
            if step.new_vars.is_empty() {
                report.empty_increments.push(step.k);
            }
            for &v in &step.new_vars {
                assigned[v] = true;
            }
            for &f in &step.factor_ids {
                if f < nf {
                    let missing: Vec<VarId> = self
                        .graph
                        .factor(f)
                        .clique()
                        .iter()
                        .copied()
                        .filter(|&v| !assigned[v])
                        .collect();
                    if !missing.is_empty() {
                        report.violations.push(Violation::UnassignedScope {
                            step: step.k,
                            factor: f,
                            vars: missing,
                        });
                    }
                }
            }
        }
        let uncovered: Vec<VarId> = (0..n).filter(|&v| !assigned[v]).collect();
        if !uncovered.is_empty() {
            report
                .violations
                .push(Violation::Uncovered { vars: uncovered });
        }
        if self.twist.is_some() && !self.is_empty() {
            let k = self.len();
            let mut rng = ChaCha8Rng::seed_from_u64(0x7715);
            for _ in 0..32 {
                let x = random_point(&self.graph, &mut rng);
                let lq = self.log_twist(k, &x);
                if lq.abs() > 1e-12 {
                    report
                        .violations
                        .push(Violation::FinalTwistNotUnit { log_q: lq });
                    break;
                }
            }
        }
        report
    }
}

fn random_point(graph: &FactorGraph, rng: &mut ChaCha8Rng) -> Vec<f64> {
    graph
        .variables()
        .iter()
        .map(|v| match v.domain {
            Domain::Discrete { cardinality } => rng.random_range(0..cardinality) as f64,
            Domain::Angle => crate::graph::wrap_angle(rng.random_range(-3.2..3.2)),
            Domain::Real => 3.0 * rng.sample::<f64, _>(StandardNormal),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownFactor {
        step: usize,
        factor: FactorId,
    },
    DuplicateFactor {
        factor: FactorId,
        steps: Vec<usize>,
    },
    MissingFactor {
        factor: FactorId,
    },
    IncrementOverlap {
        step: usize,
        vars: Vec<VarId>,
    },
    UnassignedScope {
        step: usize,
        factor: FactorId,
        vars: Vec<VarId>,
    },
    Uncovered {
        vars: Vec<VarId>,
    },
    FinalTwistNotUnit {
        log_q: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Steps with `ξ_k = ∅`; informational.
    pub empty_increments: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}
