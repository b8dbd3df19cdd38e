//! Replicated experiments producing long-format result tables.

mod gmrf;
mod lda;
mod unbiased;
mod xy;

pub mod stats;
pub mod table;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use gmrf::{build_sampler, GmrfAcfExperiment, Sampler};
pub use lda::{LdaExperiment, LdaMethod};
pub use stats::{
    bootstrap_ci, check_unbiased, compute_acf, integrated_autocorr_time, mcmc_standard_error,
    mse_table,
};
pub use table::{ResultRow, ResultTable, SCHEMA_VERSION};
pub use unbiased::UnbiasedExperiment;
pub use xy::{Reference, XyExperiment};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMethod {
    Smc,
    Ais,
    Asir,
}

impl ZMethod {
    pub fn label(self) -> &'static str {
        match self {
            ZMethod::Smc => "smc",
            ZMethod::Ais => "ais",
            ZMethod::Asir => "asir",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    Xy(XyExperiment),
    GmrfAcf(GmrfAcfExperiment),
    Lda(LdaExperiment),
    Unbiased(UnbiasedExperiment),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Xy(_) => "xy",
            Experiment::GmrfAcf(_) => "gmrf_acf",
            Experiment::Lda(_) => "lda",
            Experiment::Unbiased(_) => "unbiased",
        }
    }
}

fn default_replicates() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// How replicates are scheduled; results do not depend on it.
    #[serde(default)]
    pub exec: Exec,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Seed for replicate `r` of the stream labelled `salt`.
    pub fn replicate_seed(&self, salt: u64, r: usize) -> u64 {
        derive_seed(derive_seed(self.seed, salt), r as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        match &self.experiment {
            Experiment::Xy(x) => x.validate(),
            Experiment::GmrfAcf(g) => g.validate(),
            Experiment::Lda(l) => l.validate(),
            Experiment::Unbiased(u) => u.validate(),
        }
    }
}

/// Run every replicate of `cfg` and assemble the table in replicate order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    match &cfg.experiment {
        Experiment::Xy(x) => xy::run(cfg, x),
        Experiment::GmrfAcf(g) => gmrf::run(cfg, g),
        Experiment::Lda(l) => lda::run(cfg, l),
        Experiment::Unbiased(u) => unbiased::run(cfg, u),
    }
}

/// Run and write the CSV to `cfg.output` when set.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let table = run_experiment(cfg)?;
    if let Some(path) = &cfg.output {
        table.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(table)
}

/// `f(r)` for each replicate, scheduled per `exec`, in replicate order.
pub(crate) fn replicates<T, F>(exec: Exec, count: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par::map_indexed(exec, 1, count, f)
}

/// Record a failed replicate without aborting the experiment.
pub(crate) fn record_failure(
    t: &mut ResultTable,
    exp: &str,
    method: &str,
    ordering: &str,
    n: usize,
    r: usize,
) {
    t.push(exp, method, ordering, n, Some(r), "failed", 1.0);
}
