use thiserror::Error;

use crate::graph::VarId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {0} is not assigned")]
    MissingVariable(VarId),

    #[error("variable {var}: value {value} lies outside its domain")]
    OutOfDomain { var: VarId, value: f64 },

    #[error("variable {0} does not exist")]
    UnknownVariable(VarId),

    #[error("factor {0} does not exist")]
    UnknownFactor(usize),

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("state space of {states} configurations exceeds the enumeration cap {cap}")]
    DomainTooLarge { states: f64, cap: u64 },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("invalid ordering: {0}")]
    InvalidOrder(String),

    #[error("graph carries no lattice metadata")]
    MissingLattice,

    #[error("all particle weights are zero at step {step}")]
    DegenerateWeights { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid temperature ladder: {0}")]
    InvalidLadder(String),

    #[error("no single-site kernel for variable {0}")]
    KernelUnavailable(VarId),

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("block is not a chain: {0}")]
    NotAChain(String),

    #[error("chain of length {len} is too short for lag {max_lag}")]
    ShortChain { len: usize, max_lag: usize },

    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no reference value for {0}")]
    MissingReference(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
