//! Particle MCMC: PGAS kernels and partially blocked Gibbs samplers.

pub mod ancestor;
pub mod blocking;
pub mod pgas;

pub use ancestor::{ancestor_log_weights, compute_dependency_sets, DependencySets};
pub use blocking::{
    partial_blocking_gibbs, BlockKernel, BlockPartition, Chain, PgasBlock, Scan, SiteGibbs,
};
pub use pgas::{pgas_kernel, PgasKernel};
