//! Sequential Monte Carlo and particle MCMC for factor graphs.
//!
//! A [`FactorGraph`] is turned into a sequence of intermediate targets by a
//! [`Decomposition`]; [`smc::run_smc`] samples along it and returns an
//! unbiased partition-function estimate. [`pmcmc`] builds PGAS kernels and
//! partially blocked Gibbs samplers from the same pieces.

pub mod annealing;
pub mod banded;
pub mod conditional;
pub mod decomposition;
pub mod error;
pub mod experiments;
pub mod format;
pub mod graph;
pub mod logspace;
pub mod models;
pub mod par;
pub mod pmcmc;
pub mod rng;
pub mod smc;
pub mod special;

pub use decomposition::{Decomposition, OrderingStrategy};
pub use error::{Error, Result};
pub use graph::{Assignment, Domain, Factor, FactorGraph, Lattice, Potential, VarId};
