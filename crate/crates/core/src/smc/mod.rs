//! Sequential Monte Carlo over sequential decompositions.

pub mod engine;
pub mod proposal;
pub mod resample;
pub mod trace;

pub use engine::{
    estimate_log_partition, log_weight, run_smc, run_smc_with_context, ParticleSystem, SmcConfig,
    SmcOutput, StepRecord, ZEstimate,
};
pub use proposal::{EnumeratedProposal, Proposal, UniformProposal};
pub use resample::{resample_multinomial, resample_systematic, ResamplingScheme};
