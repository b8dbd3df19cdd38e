//! Mixing of Gibbs, PGAS, partially blocked PGAS and the tree sampler on a
//! Gaussian MRF, measured by autocorrelation around the exact posterior mean.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::{compute_acf, integrated_autocorr_time, mcmc_standard_error};
use super::{record_failure, replicates, ExperimentConfig, ResultTable};
use crate::decomposition::{snake_order, Decomposition};
use crate::error::{Error, Result};
use crate::graph::{FactorGraph, VarId};
use crate::models::gmrf::{
    tree_sampler_kernels, two_chain_blocks, AdaptedGaussianProposal, GMRFModel,
};
use crate::par::Exec;
use crate::pmcmc::{
    partial_blocking_gibbs, BlockKernel, BlockPartition, PgasBlock, PgasKernel, Scan, SiteGibbs,
};

const SALT_CHAIN: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Gibbs,
    Pgas,
    PgasPb,
    Tree,
}

impl Sampler {
    pub fn label(self) -> &'static str {
        match self {
            Sampler::Gibbs => "gibbs",
            Sampler::Pgas => "pgas",
            Sampler::PgasPb => "pgas_pb",
            Sampler::Tree => "tree",
        }
    }
}

/// Blocks and per-block kernels for `sampler` on a lattice GMRF.
pub fn build_sampler(
    sampler: Sampler,
    graph: &Arc<FactorGraph>,
    particles: usize,
) -> Result<(BlockPartition, Vec<Box<dyn BlockKernel>>)> {
    let lattice = *graph.lattice().ok_or(Error::MissingLattice)?;
    let n = graph.num_variables();
    let pgas = |part: &BlockPartition| -> Result<Vec<Box<dyn BlockKernel>>> {
        (0..part.len())
            .map(|m| {
                let mut b = PgasBlock::new(
                    graph.clone(),
                    part,
                    m,
                    Arc::new(AdaptedGaussianProposal),
                    particles,
                )?;
                b.kernel_mut().exec = Exec::Sequential;
                Ok(Box::new(b) as Box<dyn BlockKernel>)
            })
            .collect()
    };
    Ok(match sampler {
        Sampler::Gibbs => {
            let part = BlockPartition::singletons(n);
            let kernels = (0..n)
                .map(|v| Box::new(SiteGibbs::new(graph.clone(), vec![v])) as Box<dyn BlockKernel>)
                .collect();
            (part, kernels)
        }
        Sampler::Pgas => {
            let part = BlockPartition::whole(snake_order(&lattice));
            let d = Decomposition::from_variable_order(graph.clone(), &part.blocks()[0])?;
            let mut k = PgasKernel::new(Arc::new(d), Arc::new(AdaptedGaussianProposal), particles)?;
            k.exec = Exec::Sequential;
            (
                part,
                vec![Box::new(PgasBlock::from_kernel(k)) as Box<dyn BlockKernel>],
            )
        }
        Sampler::PgasPb => {
            let part = two_chain_blocks(lattice.rows, lattice.cols)?;
            let kernels = pgas(&part)?;
            (part, kernels)
        }
        Sampler::Tree => {
            let part = two_chain_blocks(lattice.rows, lattice.cols)?;
            let kernels = tree_sampler_kernels(graph, &part)?;
            (part, kernels)
        }
    })
}

fn default_samplers() -> Vec<Sampler> {
    vec![
        Sampler::Gibbs,
        Sampler::Pgas,
        Sampler::PgasPb,
        Sampler::Tree,
    ]
}
fn default_burnin() -> f64 {
    0.1
}
fn default_lag() -> usize {
    50
}
fn check_lag() -> usize {
    5
}
fn check_gap() -> f64 {
    0.1
}
fn unit() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn fifty() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmrfAcfExperiment {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "unit")]
    pub sigma_obs: f64,
    #[serde(default = "tenth")]
    pub sigma_pair: f64,
    /// Observations; simulated from the model with `model_seed` when absent.
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub model_seed: u64,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<Sampler>,
    #[serde(default = "fifty")]
    pub particles: usize,
    pub iterations: usize,
    #[serde(default = "default_burnin")]
    pub burnin: f64,
    /// Tracked variables (row-major ids from 0); the centre site by default.
    #[serde(default)]
    pub track: Vec<VarId>,
    #[serde(default = "default_lag")]
    pub max_lag: usize,
    #[serde(default = "check_lag")]
    pub check_lag: usize,
    /// Largest allowed ACF gap between the two partially blocked samplers.
    #[serde(default = "check_gap")]
    pub check_gap: f64,
    #[serde(default)]
    pub scan: Scan,
}

impl Default for GmrfAcfExperiment {
    /// 10×10 lattice, 10 000 iterations, every sampler.
    fn default() -> Self {
        toml::from_str("rows = 10\ncols = 10\niterations = 10000").expect("valid defaults")
    }
}

impl GmrfAcfExperiment {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(0.0..1.0).contains(&self.burnin) {
            return Err(Error::Config(
                "need iterations > 0 and burn-in in [0, 1)".into(),
            ));
        }
        let n = self.rows * self.cols;
        if self.track.iter().any(|&v| v >= n) {
            return Err(Error::Config("tracked variable outside the lattice".into()));
        }
        if self
            .samplers
            .iter()
            .any(|s| matches!(s, Sampler::Pgas | Sampler::PgasPb))
            && self.particles < 2
        {
            return Err(Error::Config("PGAS needs at least 2 particles".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<GMRFModel> {
        match &self.y {
            Some(y) => GMRFModel::new(
                self.rows,
                self.cols,
                self.sigma_obs,
                self.sigma_pair,
                y.clone(),
            ),
            None => GMRFModel::simulate(
                self.rows,
                self.cols,
                self.sigma_obs,
                self.sigma_pair,
                self.model_seed,
            ),
        }
    }

    pub fn tracked(&self) -> Vec<VarId> {
        if self.track.is_empty() {
            vec![(self.rows / 2) * self.cols + self.cols / 2]
        } else {
            self.track.clone()
        }
    }
}

pub(super) fn run(cfg: &ExperimentConfig, x: &GmrfAcfExperiment) -> Result<ResultTable> {
    const EXP: &str = "gmrf_acf";
    let model = x.model()?;
    let post = model.exact_posterior()?;
    let g = Arc::new(model.graph()?);
    let track = x.tracked();
    let mut t = ResultTable::new();
    for &v in &track {
        t.push(
            EXP,
            "exact",
            &format!("x{v}"),
            0,
            None,
            "mean",
            post.mean[v],
        );
    }
    // mean ACF at the check lag, per sampler
    let mut at_lag: Vec<(Sampler, f64)> = Vec::new();
    for &s in &x.samplers {
        let (part, kernels) = build_sampler(s, &g, x.particles)?;
        let n = if matches!(s, Sampler::Pgas | Sampler::PgasPb) {
            x.particles
        } else {
            0
        };
        let res = replicates(cfg.exec, cfg.replicates, |r| {
            let chain = partial_blocking_gibbs(
                &g,
                &part,
                &kernels,
                &model.y,
                x.iterations,
                cfg.replicate_seed(SALT_CHAIN, r),
                x.scan,
                Some(&track),
            )?;
            Ok(chain.burn_in(x.burnin))
        });
        let (mut sum, mut count) = (0.0, 0usize);
        for (r, chain) in res.into_iter().enumerate() {
            let chain = match chain {
                Ok(c) => c,
                Err(_) => {
                    record_failure(&mut t, EXP, s.label(), "", n, r);
                    continue;
                }
            };
            for (j, &v) in track.iter().enumerate() {
                let series = chain.series(j);
                let label = format!("x{v}");
                let acf = compute_acf(&series, post.mean[v], x.max_lag)?;
                for (lag, a) in acf.iter().enumerate() {
                    t.push(
                        EXP,
                        s.label(),
                        &label,
                        n,
                        Some(r),
                        &format!("acf_lag_{lag}"),
                        *a,
                    );
                }
                let m = series.iter().sum::<f64>() / series.len() as f64;
                t.push(EXP, s.label(), &label, n, Some(r), "mean", m);
                t.push(
                    EXP,
                    s.label(),
                    &label,
                    n,
                    Some(r),
                    "mcmc_se",
                    mcmc_standard_error(&series)?,
                );
                t.push(
                    EXP,
                    s.label(),
                    &label,
                    n,
                    Some(r),
                    "iact",
                    integrated_autocorr_time(&series)?,
                );
                if let Some(a) = acf.get(x.check_lag) {
                    sum += a;
                    count += 1;
                }
            }
        }
        if count > 0 {
            let mean = sum / count as f64;
            t.push(
                EXP,
                s.label(),
                "",
                n,
                None,
                &format!("mean_acf_lag_{}", x.check_lag),
                mean,
            );
            at_lag.push((s, mean));
        }
    }
    let get = |s: Sampler| at_lag.iter().find(|(k, _)| *k == s).map(|(_, v)| *v);
    if let (Some(gibbs), Some(pgas), Some(pb), Some(tree)) = (
        get(Sampler::Gibbs),
        get(Sampler::Pgas),
        get(Sampler::PgasPb),
        get(Sampler::Tree),
    ) {
        let ok = pgas < pb
            && pgas < tree
            && pb < gibbs
            && tree < gibbs
            && (pb - tree).abs() <= x.check_gap;
        t.push(
            EXP,
            "check",
            "acf_ordering",
            x.particles,
            None,
            "pass",
            ok as u8 as f64,
        );
    }
    Ok(t)
}
