//! Binary pairwise lattice MRFs with random couplings (enumerable test models).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Domain, FactorGraph, Lattice, Potential};

/// `p(s) ∝ exp(Σ_{(i,j)} J_ij s_i s_j + Σ_i h_i s_i)`, `s_i ∈ {−1, +1}` stored
/// as states `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub rows: usize,
    pub cols: usize,
    pub periodic: bool,
    /// One coupling per lattice edge, in [`Lattice::edges`] order.
    pub couplings: Vec<f64>,
    pub fields: Vec<f64>,
}

impl IsingModel {
    /// Couplings `J_ij ~ N(0, coupling_scale²)`, fields `h_i ~ N(0, field_scale²)`.
    pub fn random(
        rows: usize,
        cols: usize,
        coupling_scale: f64,
        field_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let lattice = Lattice::new(rows, cols, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nj =
            Normal::new(0.0, coupling_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let nh =
            Normal::new(0.0, field_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let couplings = lattice
            .edges()
            .iter()
            .map(|_| nj.sample(&mut rng))
            .collect();
        let fields = (0..lattice.len()).map(|_| nh.sample(&mut rng)).collect();
        Ok(Self {
            rows,
            cols,
            periodic: false,
            couplings,
            fields,
        })
    }

    pub fn graph(&self) -> Result<FactorGraph> {
        let lattice = Lattice::new(self.rows, self.cols, self.periodic);
        let edges = lattice.edges();
        if edges.len() != self.couplings.len() || lattice.len() != self.fields.len() {
            return Err(Error::InvalidArgument(
                "parameter count does not match the lattice".into(),
            ));
        }
        let mut g = FactorGraph::new(vec![Domain::Discrete { cardinality: 2 }; lattice.len()])?
            .with_lattice(lattice)?;
        for (v, &h) in self.fields.iter().enumerate() {
            g.add_factor(
                vec![v],
                Potential::Table {
                    log_values: vec![-h, h],
                },
            )?;
        }
        for (&(i, j), &c) in edges.iter().zip(&self.couplings) {
            g.add_factor(
                vec![i, j],
                Potential::Table {
                    log_values: vec![c, -c, -c, c],
                },
            )?;
        }
        Ok(g)
    }
}
