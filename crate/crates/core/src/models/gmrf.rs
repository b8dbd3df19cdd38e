//! Square-lattice Gaussian MRF with noisy observations.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::banded::{BandCholesky, BandMatrix};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::graph::{Domain, FactorGraph, Lattice, Potential, VarId};
use crate::pmcmc::blocking::{BlockKernel, BlockPartition};
use crate::rng::{Lane, RngStreams, StreamRng};
use crate::smc::proposal::Proposal;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// `p(x | y) ∝ ∏_i exp(−(x_i − y_i)²/2σ_i²) ∏_{(i,j)} exp(−(x_i − x_j)²/2σ_ij²)`
/// on an open lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMRFModel {
    pub rows: usize,
    pub cols: usize,
    pub sigma_obs: f64,
    pub sigma_pair: f64,
    pub y: Vec<f64>,
}

impl GMRFModel {
    pub fn new(
        rows: usize,
        cols: usize,
        sigma_obs: f64,
        sigma_pair: f64,
        y: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            rows,
            cols,
            sigma_obs,
            sigma_pair,
            y,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma_obs > 0.0 && self.sigma_pair > 0.0) {
            return Err(Error::InvalidArgument(
                "standard deviations must be positive".into(),
            ));
        }
        if self.rows * self.cols == 0 || self.y.len() != self.rows * self.cols {
            return Err(Error::InvalidArgument(format!(
                "{} observations for a {}x{} lattice",
                self.y.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    /// Observations generated by drawing `x` from the model with zero data
    /// and adding `N(0, σ_i²)` noise.
    pub fn simulate(
        rows: usize,
        cols: usize,
        sigma_obs: f64,
        sigma_pair: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::new(rows, cols, sigma_obs, sigma_pair, vec![0.0; rows * cols])?;
        let post = m.exact_posterior()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = post.sample(&mut rng);
        m.y = x
            .iter()
            .map(|&xi| xi + sigma_obs * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(m)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.rows, self.cols, false)
    }

    pub fn graph(&self) -> Result<FactorGraph> {
        self.check()?;
        let lattice = self.lattice();
        let mut g =
            FactorGraph::new(vec![Domain::Real; lattice.len()])?.with_lattice(lattice)?;
        for (v, &y) in self.y.iter().enumerate() {
            g.add_factor(
                vec![v],
                Potential::GaussianObs {
                    y,
                    sigma: self.sigma_obs,
                },
            )?;
        }
        for (i, j) in lattice.edges() {
            g.add_factor(
                vec![i, j],
                Potential::GaussianPair {
                    sigma: self.sigma_pair,
                },
            )?;
        }
        Ok(g)
    }

    pub fn exact_posterior(&self) -> Result<ExactPosterior> {
        ExactPosterior::from_graph(&self.graph()?)
    }
}

/// The Gaussian `exp(−½xᵀΛx + bᵀx + c)` defined by a graph of Gaussian factors.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub precision: BandMatrix,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub mean: Vec<f64>,
    /// Log of the integral of the unnormalized density.
    pub log_z: f64,
    factor: BandCholesky,
}

impl ExactPosterior {
    pub fn from_graph(g: &FactorGraph) -> Result<Self> {
        let n = g.num_variables();
        if g.variables().iter().any(|v| v.domain != Domain::Real) {
            return Err(Error::UnsupportedDomain(
                "exact posterior needs real variables".into(),
            ));
        }
        let bw = g
            .factors()
            .iter()
            .filter(|f| f.clique().len() == 2)
            .map(|f| f.clique()[0].abs_diff(f.clique()[1]))
            .max()
            .unwrap_or(0);
        let mut prec = BandMatrix::zeros(n, bw);
        let mut lin = vec![0.0; n];
        let mut constant = 0.0;
        for f in g.factors() {
            match *f.potential() {
                Potential::GaussianObs { y, sigma } => {
                    let (v, t) = (f.clique()[0], 1.0 / (sigma * sigma));
                    prec.add(v, v, t);
                    lin[v] += t * y;
                    constant -= 0.5 * t * y * y;
                }
                Potential::GaussianPair { sigma } => {
                    let (i, j, t) = (f.clique()[0], f.clique()[1], 1.0 / (sigma * sigma));
                    prec.add(i, i, t);
                    prec.add(j, j, t);
                    prec.add(i, j, -t);
                }
                Potential::Constant { log_value } => constant += log_value,
                ref p => {
                    return Err(Error::UnsupportedDomain(format!(
                        "non-Gaussian factor {p:?}"
                    )))
                }
            }
        }
        let factor = prec.cholesky()?;
        let mean = factor.solve(&lin);
        let quad: f64 = lin.iter().zip(&mean).map(|(b, m)| b * m).sum();
        let log_z = constant + 0.5 * n as f64 * LOG_2PI - 0.5 * factor.log_det() + 0.5 * quad;
        Ok(Self {
            precision: prec,
            linear: lin,
            constant,
            mean,
            log_z,
            factor,
        })
    }

    pub fn marginal_variances(&self) -> Vec<f64> {
        self.factor.inverse_diagonal()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.backward(&mut z);
        z.iter().zip(&self.mean).map(|(a, m)| a + m).collect()
    }
}

/// `(precision, mean, log ∫ of the step's factors)` of the new variable at step `k`.
fn step_gaussian(d: &Decomposition, k: usize, x: &[f64]) -> Result<(VarId, f64, f64, f64)> {
    let step = d.step(k);
    let &[v] = step.new_vars.as_slice() else {
        return Err(Error::InvalidArgument(format!(
            "Gaussian proposal needs one new variable per step, step {k} adds {}",
            step.new_vars.len()
        )));
    };
    let g = d.graph();
    // Σ −(x_v − a)²/2s² = −τ/2 x_v² + h x_v − q/2
    let (mut tau, mut h, mut q, mut constant) = (0.0, 0.0, 0.0, 0.0);
    for &f in &step.factor_ids {
        let factor = g.factor(f);
        let (a, s) = match *factor.potential() {
            Potential::GaussianObs { y, sigma } => (y, sigma),
            Potential::GaussianPair { sigma } => {
                let cl = factor.clique();
                (x[if cl[0] == v { cl[1] } else { cl[0] }], sigma)
            }
            Potential::Constant { log_value } => {
                constant += log_value;
                continue;
            }
            ref p => {
                return Err(Error::UnsupportedDomain(format!(
                    "Gaussian proposal cannot absorb factor {f} ({p:?})"
                )))
            }
        };
        let t = 1.0 / (s * s);
        tau += t;
        h += t * a;
        q += t * a * a;
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step {k} leaves variable {v} improper"
        )));
    }
    let mean = h / tau;
    let log_int = constant + 0.5 * (h * mean - q) + 0.5 * (LOG_2PI - tau.ln());
    Ok((v, tau, mean, log_int))
}

/// Fully adapted Gaussian proposal for single-site decompositions of graphs
/// built from Gaussian factors.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptedGaussianProposal;

fn log_normal(x: f64, mean: f64, tau: f64) -> f64 {
    let d = x - mean;
    0.5 * (tau.ln() - LOG_2PI) - 0.5 * tau * d * d
}

impl Proposal for AdaptedGaussianProposal {
    fn sample_increment(
        &self,
        d: &Decomposition,
        k: usize,
        x: &mut [f64],
        rng: &mut StreamRng,
    ) -> Result<f64> {
        if d.is_twisted() {
            return Err(Error::InvalidArgument(
                "adapted proposal requires an untwisted decomposition".into(),
            ));
        }
        let (v, tau, mean, _) = step_gaussian(d, k, x)?;
        let z: f64 = rng.sample(StandardNormal);
        x[v] = mean + z / tau.sqrt();
        Ok(log_normal(x[v], mean, tau))
    }

    fn log_increment_density(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        match step_gaussian(d, k, x) {
            Ok((v, tau, mean, _)) => log_normal(x[v], mean, tau),
            Err(_) => f64::NAN,
        }
    }

    fn log_adjustment(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        if k >= d.len() {
            return 0.0;
        }
        step_gaussian(d, k + 1, x).map(|t| t.3).unwrap_or(f64::NAN)
    }

    fn is_adapted(&self) -> bool {
        true
    }
}

type Cell = (i64, i64);

fn walk(start: Cell, moves: &[(u8, i64)]) -> Vec<Cell> {
    let mut path = vec![start];
    for &(dir, len) in moves {
        let (dr, dc) = match dir {
            b'D' => (1, 0),
            b'U' => (-1, 0),
            b'R' => (0, 1),
            _ => (0, -1),
        };
        for _ in 0..len {
            let (r, c) = *path.last().unwrap();
            path.push((r + dr, c + dc));
        }
    }
    path
}

/// Two interleaved inward spirals: one from the top-left corner heading down,
/// the other from its right neighbour heading right.
fn spiral_turtles(rows: i64, cols: i64) -> (Vec<Cell>, Vec<Cell>) {
    let mut b_moves = Vec::new();
    let (mut h, mut v) = (cols - 2, rows - 1);
    for i in 0.. {
        let dir = b"RDLU"[i % 4];
        let horizontal = matches!(dir, b'R' | b'L');
        let len = if horizontal { h } else { v };
        if len <= 0 {
            break;
        }
        b_moves.push((dir, len));
        if horizontal {
            h -= 2
        } else {
            v -= 2
        }
    }
    let mut a_moves = vec![(b'D', rows - 1), (b'R', 2)];
    let (mut h, mut v) = (cols - 4, rows - 2);
    for i in 0.. {
        let dir = b"URDL"[i % 4];
        let horizontal = matches!(dir, b'R' | b'L');
        let len = if horizontal { h } else { v };
        if len <= 0 {
            break;
        }
        a_moves.push((dir, len));
        if horizontal {
            h -= 2
        } else {
            v -= if i == 0 { 1 } else { 2 }
        }
    }
    (walk((0, 0), &a_moves), walk((0, 1), &b_moves))
}

/// Path order of `cells` if they induce a simple path in the lattice,
/// starting from the endpoint with the smallest id.
fn induced_path(l: &Lattice, cells: &[VarId]) -> Option<Vec<VarId>> {
    let inside: BTreeSet<VarId> = cells.iter().copied().collect();
    if inside.is_empty() {
        return None;
    }
    let nb = |v: VarId| -> Vec<VarId> {
        l.neighbours(v)
            .into_iter()
            .filter(|u| inside.contains(u))
            .collect()
    };
    let mut edges = 0;
    for &v in &inside {
        let d = nb(v).len();
        if d > 2 {
            return None;
        }
        edges += d;
    }
    if edges / 2 + 1 != inside.len() {
        return None;
    }
    let start = *inside.iter().find(|&&v| nb(v).len() <= 1)?;
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while let Some(&next) = nb(cur).iter().find(|&&u| u != prev) {
        order.push(next);
        prev = cur;
        cur = next;
    }
    (order.len() == inside.len()).then_some(order)
}

/// Whether `order` is a path in the graph induced by `g`'s pairwise factors.
pub fn is_chain(g: &FactorGraph, order: &[VarId]) -> bool {
    let mut pos = vec![usize::MAX; g.num_variables()];
    order.iter().enumerate().for_each(|(p, &v)| pos[v] = p);
    g.factors().iter().all(|f| {
        let inb: Vec<usize> = f
            .clique()
            .iter()
            .map(|&v| pos[v])
            .filter(|&p| p != usize::MAX)
            .collect();
        inb.len() < 2 || (inb.len() == 2 && inb[0].abs_diff(inb[1]) == 1)
    })
}

/// Split an even square (or near-square) lattice into two vertex sets that
/// each induce a chain, by two interleaved spirals. Cells the spirals do not
/// reach are assigned by exhaustive search. Each block is listed in chain order.
pub fn two_chain_blocks(rows: usize, cols: usize) -> Result<BlockPartition> {
    let lattice = Lattice::new(rows, cols, false);
    let fail = || Error::InvalidPartition(format!("no two-chain split found for {rows}x{cols}"));
    if rows < 2 || cols < 2 {
        return Err(fail());
    }
    let (a, b) = spiral_turtles(rows as i64, cols as i64);
    let mut owner = vec![0u8; lattice.len()];
    for (tag, path) in [(1u8, &a), (2u8, &b)] {
        for &(r, c) in path {
            if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
                return Err(fail());
            }
            let v = lattice.id(r as usize, c as usize);
            if owner[v] != 0 {
                return Err(fail());
            }
            owner[v] = tag;
        }
    }
    let free: Vec<VarId> = (0..lattice.len()).filter(|&v| owner[v] == 0).collect();
    if free.len() > 20 {
        return Err(fail());
    }
    for bits in 0u32..(1 << free.len()) {
        for (i, &v) in free.iter().enumerate() {
            owner[v] = if bits >> i & 1 == 0 { 1 } else { 2 };
        }
        let block =
            |t: u8| -> Vec<VarId> { (0..lattice.len()).filter(|&v| owner[v] == t).collect() };
        if let (Some(pa), Some(pb)) = (
            induced_path(&lattice, &block(1)),
            induced_path(&lattice, &block(2)),
        ) {
            return BlockPartition::new(vec![pa, pb], lattice.len());
        }
    }
    Err(fail())
}

/// Exact Gibbs update of a chain block of a Gaussian graph: the conditional
/// is a tridiagonal Gaussian, sampled by forward elimination and backward
/// substitution.
pub struct ChainGaussianBlock {
    graph: Arc<FactorGraph>,
    chain: Vec<VarId>,
    factors: Vec<usize>,
    pos: Vec<usize>,
}

impl ChainGaussianBlock {
    pub fn new(graph: Arc<FactorGraph>, chain: Vec<VarId>) -> Result<Self> {
        if !is_chain(&graph, &chain) {
            return Err(Error::NotAChain(format!("{chain:?}")));
        }
        let mut pos = vec![usize::MAX; graph.num_variables()];
        chain.iter().enumerate().for_each(|(p, &v)| pos[v] = p);
        let factors: BTreeSet<usize> = chain
            .iter()
            .flat_map(|&v| graph.factors_of(v).iter().copied())
            .collect();
        for &f in &factors {
            match graph.factor(f).potential() {
                Potential::GaussianObs { .. }
                | Potential::GaussianPair { .. }
                | Potential::Constant { .. } => {}
                p => {
                    return Err(Error::UnsupportedDomain(format!(
                        "non-Gaussian factor {p:?}"
                    )))
                }
            }
        }
        Ok(Self {
            graph,
            chain,
            factors: factors.into_iter().collect(),
            pos,
        })
    }

    pub fn chain(&self) -> &[VarId] {
        &self.chain
    }
}

impl BlockKernel for ChainGaussianBlock {
    fn update(&self, state: &mut [f64], streams: &RngStreams) -> Result<()> {
        let m = self.chain.len();
        let mut prec = BandMatrix::zeros(m, 1);
        let mut lin = vec![0.0; m];
        for &f in &self.factors {
            let factor = self.graph.factor(f);
            match *factor.potential() {
                Potential::GaussianObs { y, sigma } => {
                    let p = self.pos[factor.clique()[0]];
                    let t = 1.0 / (sigma * sigma);
                    prec.add(p, p, t);
                    lin[p] += t * y;
                }
                Potential::GaussianPair { sigma } => {
                    let t = 1.0 / (sigma * sigma);
                    let (i, j) = (factor.clique()[0], factor.clique()[1]);
                    match (self.pos[i], self.pos[j]) {
                        (usize::MAX, p) => {
                            prec.add(p, p, t);
                            lin[p] += t * state[i];
                        }
                        (p, usize::MAX) => {
                            prec.add(p, p, t);
                            lin[p] += t * state[j];
                        }
                        (p, q) => {
                            prec.add(p, p, t);
                            prec.add(q, q, t);
                            prec.add(p, q, -t);
                        }
                    }
                }
                _ => {}
            }
        }
        let ch = prec.cholesky()?;
        let mean = ch.solve(&lin);
        let mut rng = streams.stream(Lane::Gibbs, 0, 0);
        let mut z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        ch.backward(&mut z);
        for (p, &v) in self.chain.iter().enumerate() {
            state[v] = mean[p] + z[p];
        }
        Ok(())
    }
}

/// Per-block chain kernels for the tree sampler.
pub fn tree_sampler_kernels(
    graph: &Arc<FactorGraph>,
    partition: &BlockPartition,
) -> Result<Vec<Box<dyn BlockKernel>>> {
    partition
        .blocks()
        .iter()
        .map(|b| {
            Ok(Box::new(ChainGaussianBlock::new(graph.clone(), b.clone())?)
                as Box<dyn BlockKernel>)
        })
        .collect()
}

/// Whether consecutive entries of `order` are lattice neighbours and no
/// vertex repeats.
pub fn is_lattice_path(l: &Lattice, order: &[VarId]) -> bool {
    let mut seen = BTreeSet::new();
    order.iter().all(|v| seen.insert(*v))
        && order.windows(2).all(|w| l.neighbours(w[0]).contains(&w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::OrderingStrategy;
    use crate::smc::{run_smc, SmcConfig};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn single_site_posterior() {
        let m = GMRFModel::new(1, 1, 2.0, 1.0, vec![0.7]).unwrap();
        let p = m.exact_posterior().unwrap();
        assert_abs_diff_eq!(p.mean[0], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(
            p.log_z,
            (2.0 * std::f64::consts::PI * 4.0).sqrt().ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(p.marginal_variances()[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_limit() {
        let y = vec![0.3, -1.0, 2.0, 0.5];
        let p = GMRFModel::new(2, 2, 1.0, 1e6, y.clone())
            .unwrap()
            .exact_posterior()
            .unwrap();
        for (a, b) in p.mean.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn two_by_two_dense_oracle() {
        let y = vec![1.0, 0.0, 0.0, -1.0];
        let p = GMRFModel::new(2, 2, 1.0, 0.1, y.clone())
            .unwrap()
            .exact_posterior()
            .unwrap();
        let mut lam = DMatrix::<f64>::zeros(4, 4);
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            lam[(i, j)] = -100.0;
            lam[(j, i)] = -100.0;
        }
        for i in 0..4 {
            lam[(i, i)] = 1.0 + 200.0;
        }
        let mean = lam
            .clone()
            .lu()
            .solve(&DVector::from_vec(y.clone()))
            .unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(p.mean[i], mean[i], epsilon = 1e-12);
        }
        let ld = lam.determinant().ln();
        let quad = DVector::from_vec(y.clone()).dot(&mean);
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let lz = 2.0 * LOG_2PI - 0.5 * ld + 0.5 * quad - 0.5 * yy;
        assert_abs_diff_eq!(p.log_z, lz, epsilon = 1e-10);
    }

    #[test]
    fn adapted_weights_are_unit() {
        let m = GMRFModel::simulate(4, 4, 1.0, 0.1, 5).unwrap();
        let g = Arc::new(m.graph().unwrap());
        let d = Decomposition::build(g, &OrderingStrategy::Snake).unwrap();
        let out = run_smc(&d, &AdaptedGaussianProposal, &SmcConfig::new(16, 2)).unwrap();
        assert_eq!(out.system.steps.len(), 16);
        for s in &out.system.steps {
            assert!(
                s.log_weights.iter().all(|w| w.abs() < 1e-8),
                "{:?}",
                s.log_weights
            );
        }
        let exact = m.exact_posterior().unwrap().log_z;
        let out = run_smc(&d, &AdaptedGaussianProposal, &SmcConfig::new(4096, 2)).unwrap();
        assert_abs_diff_eq!(out.z.final_log_z(), exact, epsilon = 0.1);
    }

    #[test]
    fn spiral_split_is_two_chains() {
        for n in [4, 6, 8, 10, 12] {
            let part = two_chain_blocks(n, n).unwrap();
            let l = Lattice::new(n, n, false);
            let g = GMRFModel::new(n, n, 1.0, 1.0, vec![0.0; n * n])
                .unwrap()
                .graph()
                .unwrap();
            for b in part.blocks() {
                assert!(is_lattice_path(&l, b));
                assert!(is_chain(&g, b));
            }
        }
        let p = two_chain_blocks(10, 10).unwrap();
        assert_eq!(p.blocks()[0][0], 0);
        let expected = [
            "ABBBBBBBBB",
            "ABAAAAAAAB",
            "ABABBBBBAB",
            "ABABAAABAB",
            "ABABABABAB",
            "ABABABABAB",
            "ABABABABAB",
            "ABABABBBAB",
            "ABABAAAAAB",
            "AAABBBBBBB",
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, ch) in row.bytes().enumerate() {
                let in_a = p.blocks()[0].contains(&(r * 10 + c));
                assert_eq!(in_a, ch == b'A', "cell ({r},{c})");
            }
        }
    }

    #[test]
    fn chain_kernel_single_site() {
        // a one-variable block is the exact Gaussian conditional
        let m = GMRFModel::new(1, 2, 1.0, 0.5, vec![0.0, 0.0]).unwrap();
        let g = Arc::new(m.graph().unwrap());
        let k = ChainGaussianBlock::new(g, vec![0]).unwrap();
        let streams = RngStreams::new(4);
        let n = 20_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for t in 0..n {
            let mut x = vec![0.0, 2.0];
            k.update(&mut x, &streams.child(t)).unwrap();
            s1 += x[0];
            s2 += x[0] * x[0];
        }
        // conditional: precision 1 + 4 = 5, mean 8/5
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 1.6).abs() < 4.0 * (0.2f64 / n as f64).sqrt());
        assert!((var - 0.2).abs() < 0.01);
    }
}
