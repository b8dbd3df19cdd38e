//! Unbiasedness check on an enumerable binary lattice MRF.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::check_unbiased;
use super::{record_failure, replicates, ExperimentConfig, ResultTable, ZMethod};
use crate::annealing::{make_ladder, run_ais, run_asir, AisConfig, LadderKind};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::format::parse_ordering;
use crate::models::IsingModel;
use crate::par::Exec;
use crate::smc::{run_smc, EnumeratedProposal, Proposal, SmcConfig, UniformProposal};

const SALT_RUN: u64 = 11;
const SALT_ORDER: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    #[default]
    Uniform,
    Adapted,
}

fn dim() -> usize {
    4
}
fn unit() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn hundred() -> usize {
    100
}
fn one() -> usize {
    1
}
fn lr() -> String {
    "lr".into()
}
fn all_methods() -> Vec<ZMethod> {
    vec![ZMethod::Smc, ZMethod::Ais, ZMethod::Asir]
}
fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasedExperiment {
    #[serde(default = "dim")]
    pub rows: usize,
    #[serde(default = "dim")]
    pub cols: usize,
    #[serde(default = "unit")]
    pub coupling_scale: f64,
    #[serde(default = "half")]
    pub field_scale: f64,
    #[serde(default)]
    pub model_seed: u64,
    #[serde(default = "all_methods")]
    pub methods: Vec<ZMethod>,
    /// SMC particles; also the AIS run count and ASIR particle count.
    #[serde(default = "hundred")]
    pub particles: usize,
    #[serde(default = "lr")]
    pub ordering: String,
    #[serde(default)]
    pub proposal: ProposalKind,
    #[serde(default = "hundred")]
    pub temps: usize,
    #[serde(default = "one")]
    pub sweeps: usize,
    #[serde(default)]
    pub ladder: LadderKind,
    /// Standard errors allowed between `mean(Ẑ)/Z` and one.
    #[serde(default = "three")]
    pub tolerance_se: f64,
}

impl Default for UnbiasedExperiment {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl UnbiasedExperiment {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.temps == 0 {
            return Err(Error::Config("particles and temps must be positive".into()));
        }
        if (self.rows * self.cols) > 24 {
            return Err(Error::Config("model too large to enumerate".into()));
        }
        parse_ordering(&self.ordering, 0)?;
        Ok(())
    }

    pub fn model(&self) -> Result<IsingModel> {
        IsingModel::random(
            self.rows,
            self.cols,
            self.coupling_scale,
            self.field_scale,
            self.model_seed,
        )
    }
}

pub(super) fn run(cfg: &ExperimentConfig, u: &UnbiasedExperiment) -> Result<ResultTable> {
    const EXP: &str = "unbiased";
    let g = Arc::new(u.model()?.graph()?);
    let exact = g.brute_force_log_partition()?;
    let mut t = ResultTable::new();
    t.push(EXP, "exact", "", 0, None, "log_z", exact);
    let n = u.particles;
    let proposal: Box<dyn Proposal> = match u.proposal {
        ProposalKind::Uniform => Box::new(UniformProposal),
        ProposalKind::Adapted => Box::new(EnumeratedProposal::default()),
    };
    for &method in &u.methods {
        let ordering = if method == ZMethod::Smc {
            u.ordering.as_str()
        } else {
            ""
        };
        let res = replicates(cfg.exec, cfg.replicates, |r| {
            let seed = cfg.replicate_seed(SALT_RUN, r);
            match method {
                ZMethod::Smc => {
                    let strategy = parse_ordering(&u.ordering, cfg.replicate_seed(SALT_ORDER, r))?;
                    let d = Decomposition::build(g.clone(), &strategy)?;
                    let mut sc = SmcConfig::new(n, seed);
                    sc.exec = Exec::Parallel;
                    Ok(run_smc(&d, proposal.as_ref(), &sc)?.z.final_log_z())
                }
                ZMethod::Ais => {
                    let ais = AisConfig {
                        runs: n,
                        sweeps: u.sweeps,
                        seed,
                        exec: Exec::Parallel,
                    };
                    Ok(run_ais(&g, &make_ladder(u.ladder, u.temps)?, &ais)?.log_z)
                }
                ZMethod::Asir => Ok(run_asir(
                    &g,
                    &make_ladder(u.ladder, u.temps)?,
                    n,
                    u.sweeps,
                    seed,
                    Exec::Parallel,
                )?
                .log_z),
            }
        });
        let mut ok = Vec::with_capacity(res.len());
        for (r, v) in res.into_iter().enumerate() {
            match v {
                Ok(lz) => {
                    t.push(EXP, method.label(), ordering, n, Some(r), "log_z", lz);
                    ok.push(lz);
                }
                Err(_) => record_failure(&mut t, EXP, method.label(), ordering, n, r),
            }
        }
        if let Ok(c) = check_unbiased(&ok, exact, u.tolerance_se) {
            t.push(
                EXP,
                method.label(),
                ordering,
                n,
                None,
                "ratio_mean",
                c.ratio_mean,
            );
            t.push(
                EXP,
                method.label(),
                ordering,
                n,
                None,
                "ratio_se",
                c.ratio_se,
            );
            let complete = ok.len() == cfg.replicates;
            t.push(
                EXP,
                method.label(),
                ordering,
                n,
                None,
                "pass",
                (c.passed && complete) as u8 as f64,
            );
        } else {
            t.push(EXP, method.label(), ordering, n, None, "pass", 0.0);
        }
    }
    Ok(t)
}
