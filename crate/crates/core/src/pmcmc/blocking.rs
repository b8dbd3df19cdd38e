//! Partially blocked Gibbs sampling over a vertex partition.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::pgas::PgasKernel;
use crate::conditional::SiteSampler;
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::graph::{FactorGraph, VarId};
use crate::rng::{Lane, RngStreams};
use crate::smc::proposal::Proposal;

/// Disjoint vertex blocks covering every variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    blocks: Vec<Vec<VarId>>,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<VarId>>, num_variables: usize) -> Result<Self> {
        let mut seen = vec![false; num_variables];
        for (m, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {m} is empty")));
            }
            for &v in block {
                if v >= num_variables {
                    return Err(Error::InvalidPartition(format!(
                        "variable {v} out of range"
                    )));
                }
                if seen[v] {
                    return Err(Error::InvalidPartition(format!(
                        "variable {v} in two blocks"
                    )));
                }
                seen[v] = true;
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("variable {v} in no block")));
        }
        Ok(Self { blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|v| vec![v]).collect(),
        }
    }

    pub fn whole(order: Vec<VarId>) -> Self {
        Self {
            blocks: vec![order],
        }
    }

    pub fn blocks(&self) -> &[Vec<VarId>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Variables outside block `m`.
    pub fn complement(&self, m: usize) -> Vec<VarId> {
        let n: usize = self.blocks.iter().map(Vec::len).sum();
        let mut inside = vec![false; n];
        self.blocks[m].iter().for_each(|&v| inside[v] = true);
        (0..n).filter(|&v| !inside[v]).collect()
    }
}

/// A Markov kernel updating one block given the rest of the state.
pub trait BlockKernel: Send + Sync {
    fn update(&self, state: &mut [f64], streams: &RngStreams) -> Result<()>;
}

/// PGAS on the block-conditional model, with the block's variables added in
/// the listed order.
pub struct PgasBlock {
    kernel: PgasKernel,
}

impl PgasBlock {
    pub fn new(
        graph: Arc<FactorGraph>,
        partition: &BlockPartition,
        m: usize,
        proposal: Arc<dyn Proposal>,
        particles: usize,
    ) -> Result<Self> {
        let context = partition.complement(m);
        let d = Decomposition::conditional(graph, &partition.blocks()[m], &context)?;
        Ok(Self {
            kernel: PgasKernel::new(Arc::new(d), proposal, particles)?,
        })
    }

    pub fn from_kernel(kernel: PgasKernel) -> Self {
        Self { kernel }
    }

    pub fn kernel(&self) -> &PgasKernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut PgasKernel {
        &mut self.kernel
    }
}

impl BlockKernel for PgasBlock {
    fn update(&self, state: &mut [f64], streams: &RngStreams) -> Result<()> {
        let next = self.kernel.apply(state, streams)?;
        state.copy_from_slice(&next);
        Ok(())
    }
}

/// Exact (or Metropolis-fallback) single-site updates, in block order.
pub struct SiteGibbs {
    graph: Arc<FactorGraph>,
    vars: Vec<VarId>,
}

impl SiteGibbs {
    pub fn new(graph: Arc<FactorGraph>, vars: Vec<VarId>) -> Self {
        Self { graph, vars }
    }
}

impl BlockKernel for SiteGibbs {
    fn update(&self, state: &mut [f64], streams: &RngStreams) -> Result<()> {
        let sampler = SiteSampler::new(&self.graph);
        let mut rng = streams.stream(Lane::Gibbs, 0, 0);
        for &v in &self.vars {
            sampler.update(v, state, &mut rng)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    #[default]
    Systematic,
    Random,
}

/// Recorded values of the tracked variables, one row per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub vars: Vec<VarId>,
    pub values: Vec<f64>,
}

impl Chain {
    pub fn iterations(&self) -> usize {
        if self.vars.is_empty() {
            0
        } else {
            self.values.len() / self.vars.len()
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.vars.len();
        &self.values[t * w..(t + 1) * w]
    }

    /// Trace of the `j`-th tracked variable.
    pub fn series(&self, j: usize) -> Vec<f64> {
        let w = self.vars.len();
        self.values.iter().skip(j).step_by(w).copied().collect()
    }

    /// Drop the first `fraction` of iterations.
    pub fn burn_in(&self, fraction: f64) -> Chain {
        let t = self.iterations();
        let skip = ((t as f64) * fraction).floor() as usize;
        Chain {
            vars: self.vars.clone(),
            values: self.values[skip * self.vars.len()..].to_vec(),
        }
    }
}

/// Run `iterations` sweeps; each sweep updates every block once (systematic
/// order, or a fresh random permutation per sweep). Records `track` (all
/// variables when `None`) after each sweep.
pub fn partial_blocking_gibbs(
    graph: &FactorGraph,
    partition: &BlockPartition,
    kernels: &[Box<dyn BlockKernel>],
    init: &[f64],
    iterations: usize,
    seed: u64,
    scan: Scan,
    track: Option<&[VarId]>,
) -> Result<Chain> {
    let n = graph.num_variables();
    if partition.blocks().iter().map(Vec::len).sum::<usize>() != n {
        return Err(Error::InvalidPartition(
            "partition does not cover the graph".into(),
        ));
    }
    if kernels.len() != partition.len() {
        return Err(Error::InvalidPartition(format!(
            "{} kernels for {} blocks",
            kernels.len(),
            partition.len()
        )));
    }
    if init.len() != n || init.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument(
            "initial state must assign every variable".into(),
        ));
    }
    let vars: Vec<VarId> = track.map_or_else(|| (0..n).collect(), <[VarId]>::to_vec);
    let master = RngStreams::new(seed);
    let mut state = init.to_vec();
    let mut values = Vec::with_capacity(iterations * vars.len());
    let mut order: Vec<usize> = (0..kernels.len()).collect();
    for t in 0..iterations {
        let sweep = master.child(t as u64);
        if scan == Scan::Random {
            let mut rng = sweep.stream(Lane::Misc, 0, 0);
            order.shuffle(&mut rng);
        }
        for &m in &order {
            kernels[m].update(&mut state, &sweep.child(m as u64))?;
        }
        values.extend(vars.iter().map(|&v| state[v]));
    }
    Ok(Chain { vars, values })
}
