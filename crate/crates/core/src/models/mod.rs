//! Bundled models: XY, Gaussian MRF, binary lattice MRF and LDA.

pub mod gmrf;
pub mod ising;
pub mod lda;
pub mod xy;

pub use gmrf::{
    two_chain_blocks, AdaptedGaussianProposal, ChainGaussianBlock, ExactPosterior, GMRFModel,
};
pub use ising::IsingModel;
pub use lda::{
    exact_heldout_loglik, lrs_heldout_loglik, read_documents, smc_heldout_loglik, Document, LDAModel, LdaSmcConfig,
};
pub use xy::{AdaptedVonMisesProposal, XYModel};
