//! Classical XY model with fully adapted von Mises proposals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::graph::{Domain, FactorGraph, Lattice, Potential, VarId};
use crate::rng::StreamRng;
use crate::smc::proposal::Proposal;
use crate::special::{log_i0, VonMisesParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XYModel {
    pub rows: usize,
    pub cols: usize,
    pub periodic: bool,
    pub beta: f64,
    /// Uniform coupling `J`.
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl XYModel {
    pub fn new(rows: usize, cols: usize, beta: f64) -> Self {
        Self {
            rows,
            cols,
            periodic: true,
            beta,
            coupling: 1.0,
        }
    }

    pub fn open(mut self) -> Self {
        self.periodic = false;
        self
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.rows, self.cols, self.periodic)
    }

    /// One angle per site and `β J cos(x_i − x_j)` per lattice edge.
    pub fn graph(&self) -> Result<FactorGraph> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument("empty lattice".into()));
        }
        let lattice = self.lattice();
        let mut g =
            FactorGraph::new(vec![Domain::Angle; lattice.len()])?.with_lattice(lattice)?;
        for (i, j) in lattice.edges() {
            g.add_factor(
                vec![i, j],
                Potential::XyPair {
                    coupling: self.beta * self.coupling,
                },
            )?;
        }
        Ok(g)
    }
}

/// `κ e^{iμ} = Σ_j c_j e^{i x_j}` over the given couplings and neighbour angles.
pub fn von_mises_params(neighbours: &[(f64, f64)]) -> VonMisesParams {
    let (c, s) = neighbours.iter().fold((0.0, 0.0), |(c, s), &(k, x)| {
        (c + k * x.cos(), s + k * x.sin())
    });
    VonMisesParams::from_resultant(c, s)
}

/// Von Mises proposal for step `k`: the product of the XY couplings in `C_k`
/// seen as a function of the new angle. Returns the parameters and the sum
/// of any constant factors.
fn step_params(d: &Decomposition, k: usize, x: &[f64]) -> Result<(VarId, VonMisesParams, f64)> {
    let step = d.step(k);
    let &[v] = step.new_vars.as_slice() else {
        return Err(Error::InvalidArgument(format!(
            "von Mises proposal needs one new variable per step, step {k} adds {}",
            step.new_vars.len()
        )));
    };
    let g = d.graph();
    let (mut c, mut s, mut constant) = (0.0, 0.0, 0.0);
    for &f in &step.factor_ids {
        let factor = g.factor(f);
        match factor.potential() {
            Potential::XyPair { coupling } => {
                let cl = factor.clique();
                let other = if cl[0] == v { cl[1] } else { cl[0] };
                if other == v {
                    constant += coupling;
                } else {
                    c += coupling * x[other].cos();
                    s += coupling * x[other].sin();
                }
            }
            Potential::Constant { log_value } => constant += log_value,
            p => {
                return Err(Error::UnsupportedDomain(format!(
                    "von Mises proposal cannot absorb factor {f} ({p:?})"
                )))
            }
        }
    }
    Ok((v, VonMisesParams::from_resultant(c, s), constant))
}

/// Fully adapted proposal for single-site decompositions of XY-type graphs:
/// `r_k` is the von Mises conditional of the new angle and
/// `ν_{k−1} = 2π I_0(κ)` (times any constant factors).
#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptedVonMisesProposal;

impl Proposal for AdaptedVonMisesProposal {
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
        let (v, p, _) = step_params(d, k, x)?;
        x[v] = p.sample(rng);
        Ok(p.log_density(x[v]))
    }

    fn log_increment_density(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        match step_params(d, k, x) {
            Ok((v, p, _)) => p.log_density(x[v]),
            Err(_) => f64::NAN,
        }
    }

    fn log_adjustment(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        if k >= d.len() {
            return 0.0;
        }
        match step_params(d, k + 1, x) {
            Ok((_, p, constant)) => constant + (2.0 * PI).ln() + log_i0(p.kappa),
            Err(_) => f64::NAN,
        }
    }

    fn is_adapted(&self) -> bool {
        true
    }
}
