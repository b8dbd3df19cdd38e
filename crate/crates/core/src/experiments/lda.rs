//! Held-out likelihood estimates for synthetic LDA documents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_ci, check_unbiased, variance};
use super::{record_failure, replicates, ExperimentConfig, ResultTable};
use crate::error::{Error, Result};
use crate::models::lda::{
    exact_heldout_loglik_capped, lrs_heldout_loglik, smc_heldout_loglik, Document, LDAModel,
    LdaSmcConfig, DEFAULT_LDA_CAP,
};
use crate::par::Exec;

const SALT_RUN: u64 = 31;
const SALT_BOOT: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdaMethod {
    Smc,
    Lrs,
}

impl LdaMethod {
    pub fn label(self) -> &'static str {
        match self {
            LdaMethod::Smc => "smc",
            LdaMethod::Lrs => "lrs",
        }
    }
}

fn four() -> usize {
    4
}
fn ten() -> usize {
    10
}
fn eight() -> usize {
    8
}
fn unit() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn methods() -> Vec<LdaMethod> {
    vec![LdaMethod::Smc, LdaMethod::Lrs]
}
fn resamples() -> usize {
    10_000
}
fn three() -> f64 {
    3.0
}
fn majority() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaExperiment {
    #[serde(default = "four")]
    pub topics: usize,
    #[serde(default = "ten")]
    pub vocab: usize,
    #[serde(default = "unit")]
    pub alpha: f64,
    /// Symmetric Dirichlet concentration of the synthetic topics.
    #[serde(default = "half")]
    pub topic_concentration: f64,
    #[serde(default)]
    pub model_seed: u64,
    /// Synthetic documents drawn from the model.
    #[serde(default = "ten")]
    pub docs: usize,
    #[serde(default = "eight")]
    pub doc_len: usize,
    /// Explicit model and documents, overriding the synthetic ones.
    #[serde(default)]
    pub model: Option<LDAModel>,
    #[serde(default)]
    pub documents: Option<Vec<Document>>,
    pub particles: Vec<usize>,
    #[serde(default = "methods")]
    pub methods: Vec<LdaMethod>,
    #[serde(default = "resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "three")]
    pub tolerance_se: f64,
    /// Fraction of documents on which SMC must have the smaller variance.
    #[serde(default = "majority")]
    pub variance_majority: f64,
}

impl Default for LdaExperiment {
    fn default() -> Self {
        toml::from_str("particles = [100]").expect("valid defaults")
    }
}

impl LdaExperiment {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.particles.is_empty() || self.particles.contains(&0) {
            return Err(Error::Config(
                "particle grid must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<(LDAModel, Vec<Document>)> {
        let model = match &self.model {
            Some(m) => m.clone(),
            None => LDAModel::synthetic(
                self.topics,
                self.vocab,
                self.alpha,
                self.topic_concentration,
                self.model_seed,
            )?,
        };
        let docs = match &self.documents {
            Some(d) => d.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.model_seed ^ 0x5eed);
                (0..self.docs)
                    .map(|_| model.sample_document(self.doc_len, &mut rng))
                    .collect::<Result<_>>()?
            }
        };
        Ok((model, docs))
    }
}

pub(super) fn run(cfg: &ExperimentConfig, x: &LdaExperiment) -> Result<ResultTable> {
    const EXP: &str = "lda";
    let (model, docs) = x.corpus()?;
    let mut t = ResultTable::new();
    for &n in &x.particles {
        // per document: method -> variance of log p̂
        let mut variances: Vec<[Option<f64>; 2]> = vec![[None, None]; docs.len()];
        for (di, doc) in docs.iter().enumerate() {
            let label = format!("doc{di}");
            let exact = exact_heldout_loglik_capped(&model, doc, DEFAULT_LDA_CAP).ok();
            if let Some(e) = exact {
                t.push(EXP, "exact", &label, 0, None, "log_p", e);
            }
            for (mi, &method) in x.methods.iter().enumerate() {
                let res = replicates(cfg.exec, cfg.replicates, |r| {
                    let seed = cfg.replicate_seed(SALT_RUN, r);
                    match method {
                        LdaMethod::Smc => {
                            let mut c = LdaSmcConfig::new(n);
                            c.exec = Exec::Sequential;
                            smc_heldout_loglik(&model, doc, &c, seed)
                        }
                        LdaMethod::Lrs => {
                            lrs_heldout_loglik(&model, doc, n, Exec::Sequential, seed)
                        }
                    }
                });
                let mut ok = Vec::new();
                for (r, v) in res.into_iter().enumerate() {
                    match v {
                        Ok(lp) => {
                            t.push(EXP, method.label(), &label, n, Some(r), "log_p", lp);
                            ok.push(lp);
                        }
                        Err(_) => record_failure(&mut t, EXP, method.label(), &label, n, r),
                    }
                }
                if ok.len() < 2 {
                    continue;
                }
                let var = variance(&ok);
                t.push(EXP, method.label(), &label, n, None, "var_log_p", var);
                variances[di][if method == LdaMethod::Smc { 0 } else { 1 }] = Some(var);
                let ci = bootstrap_ci(
                    &ok,
                    x.bootstrap_resamples,
                    0.95,
                    cfg.replicate_seed(SALT_BOOT, di * 8 + mi),
                )?;
                t.push(EXP, method.label(), &label, n, None, "mean_log_p", ci.mean);
                t.push(EXP, method.label(), &label, n, None, "ci_low", ci.low);
                t.push(EXP, method.label(), &label, n, None, "ci_high", ci.high);
                if let Some(e) = exact {
                    let c = check_unbiased(&ok, e, x.tolerance_se)?;
                    t.push(
                        EXP,
                        method.label(),
                        &label,
                        n,
                        None,
                        "ratio_mean",
                        c.ratio_mean,
                    );
                    t.push(EXP, method.label(), &label, n, None, "ratio_se", c.ratio_se);
                    if method == LdaMethod::Smc {
                        t.push(
                            EXP,
                            method.label(),
                            &label,
                            n,
                            None,
                            "pass",
                            c.passed as u8 as f64,
                        );
                    }
                }
            }
        }
        let compared: Vec<bool> = variances
            .iter()
            .filter_map(|v| match v {
                [Some(s), Some(l)] => Some(s <= l),
                _ => None,
            })
            .collect();
        if !compared.is_empty() {
            let wins = compared.iter().filter(|&&w| w).count();
            t.push(
                EXP,
                "check",
                "smc_var_le_lrs",
                n,
                None,
                "docs_won",
                wins as f64,
            );
            let ok = wins as f64 >= x.variance_majority * compared.len() as f64;
            t.push(
                EXP,
                "check",
                "smc_var_le_lrs",
                n,
                None,
                "pass",
                ok as u8 as f64,
            );
        }
    }
    Ok(t)
}
