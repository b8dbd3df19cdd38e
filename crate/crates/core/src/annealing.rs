//! Annealed importance sampling, with and without resampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditional::{SiteMove, SiteSampler};
use crate::error::{Error, Result};
use crate::graph::{Domain, FactorGraph, Potential};
use crate::logspace::log_mean_exp;
use crate::par::{self, Exec};
use crate::rng::{Lane, RngStreams, StreamRng};
use crate::smc::resample::resample_multinomial;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LadderKind {
    #[default]
    Linear,
    Geometric {
        ratio: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    betas: Vec<f64>,
    kind: LadderKind,
}

impl Ladder {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        let ok = betas.len() >= 2
            && betas[0] == 0.0
            && *betas.last().unwrap() == 1.0
            && betas.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidLadder(format!(
                "temperatures must rise strictly from 0 to 1, got {betas:?}"
            )));
        }
        Ok(Self {
            betas,
            kind: LadderKind::Linear,
        })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn kind(&self) -> LadderKind {
        self.kind
    }

    /// Number of steps `J` (one less than the number of temperatures).
    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }
}

/// `β_j = j/J` or `β_j = (g^j − 1)/(g^J − 1)`.
pub fn make_ladder(kind: LadderKind, steps: usize) -> Result<Ladder> {
    if steps == 0 {
        return Err(Error::InvalidLadder("need at least one step".into()));
    }
    let j = steps as f64;
    let mut betas: Vec<f64> = match kind {
        LadderKind::Linear => (0..=steps).map(|i| i as f64 / j).collect(),
        LadderKind::Geometric { ratio } => {
            if !(ratio > 1.0 && ratio.is_finite()) {
                return Err(Error::InvalidLadder(format!(
                    "geometric ratio must exceed 1, got {ratio}"
                )));
            }
            let denom = ratio.powf(j) - 1.0;
            (0..=steps)
                .map(|i| (ratio.powi(i as i32) - 1.0) / denom)
                .collect()
        }
    };
    betas[0] = 0.0;
    betas[steps] = 1.0;
    let mut ladder = Ladder::from_betas(betas)?;
    ladder.kind = kind;
    Ok(ladder)
}

/// `log π_β = (1 − β) log π_0 + β log γ`, where `π_0` is uniform over
/// discrete and angle variables and is the product of the single-variable
/// Gaussian observation factors over real ones. Because those factors also
/// appear in `γ`, `log π_β = log π_0 + β R` with `R` the sum of the
/// remaining factors.
#[derive(Debug, Clone)]
pub struct AnnealedTarget<'g> {
    graph: &'g FactorGraph,
    in_base: Vec<bool>,
    rest: Vec<usize>,
    /// Per real variable: Gaussian `(mean, precision)` of its base factors.
    base_gauss: Vec<Option<(f64, f64)>>,
    log_z0: f64,
}

impl<'g> AnnealedTarget<'g> {
    pub fn new(graph: &'g FactorGraph) -> Result<Self> {
        let n = graph.num_variables();
        let mut in_base = vec![false; graph.num_factors()];
        let mut acc = vec![(0.0, 0.0, 0.0); n];
        for (f, factor) in graph.factors().iter().enumerate() {
            if let Potential::GaussianObs { y, sigma } = *factor.potential() {
                let v = factor.clique()[0];
                in_base[f] = true;
                let t = 1.0 / (sigma * sigma);
                acc[v].0 += t;
                acc[v].1 += t * y;
                acc[v].2 += t * y * y;
            }
        }
        let mut log_z0 = 0.0;
        let mut base_gauss = vec![None; n];
        for v in 0..n {
            match graph.domain(v) {
                Domain::Discrete { cardinality } => log_z0 += (cardinality as f64).ln(),
                Domain::Angle => log_z0 += (2.0 * PI).ln(),
                Domain::Real => {
                    let (tau, h, q) = acc[v];
                    if !(tau > 0.0) {
                        return Err(Error::UnsupportedDomain(format!(
                            "real variable {v} has no observation factor to anneal from"
                        )));
                    }
                    let mean = h / tau;
                    log_z0 += 0.5 * (h * mean - q) + 0.5 * ((2.0 * PI).ln() - tau.ln());
                    base_gauss[v] = Some((mean, tau));
                }
            }
        }
        let rest = (0..graph.num_factors()).filter(|&f| !in_base[f]).collect();
        Ok(Self {
            graph,
            in_base,
            rest,
            base_gauss,
            log_z0,
        })
    }

    pub fn log_z0(&self) -> f64 {
        self.log_z0
    }

    /// `log γ − log π_0` at `x`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        let r = self.graph.log_factors(&self.rest, x);
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    /// Factor exponents giving `π_β`.
    pub fn weights(&self, beta: f64) -> Vec<f64> {
        self.in_base
            .iter()
            .map(|&b| if b { 1.0 } else { beta })
            .collect()
    }

    pub fn sample_base(&self, x: &mut [f64], rng: &mut StreamRng) {
        for (v, xv) in x.iter_mut().enumerate() {
            *xv = match self.graph.domain(v) {
                Domain::Discrete { cardinality } => rng.random_range(0..cardinality) as f64,
                Domain::Angle => PI - 2.0 * PI * rng.random::<f64>(),
                Domain::Real => {
                    let (m, t) = self.base_gauss[v].unwrap();
                    m + rng.sample::<f64, _>(StandardNormal) / t.sqrt()
                }
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisConfig {
    pub runs: usize,
    /// Systematic-scan sweeps applied at each intermediate temperature.
    pub sweeps: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisOutput {
    /// Per-run (AIS) or per-step (ASIR) log-weights, excluding `log Z_0`.
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    pub site_updates: u64,
    pub metropolis_proposals: u64,
    pub metropolis_accepts: u64,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    updates: u64,
    proposals: u64,
    accepts: u64,
}

fn sweep(
    sampler: &SiteSampler<'_>,
    x: &mut [f64],
    sweeps: usize,
    rng: &mut StreamRng,
    c: &mut Counts,
) -> Result<()> {
    for _ in 0..sweeps {
        for v in 0..x.len() {
            match sampler.update(v, x, rng)? {
                SiteMove::Exact => {}
                SiteMove::Metropolis { accepted } => {
                    c.proposals += 1;
                    c.accepts += accepted as u64;
                }
            }
            c.updates += 1;
        }
    }
    Ok(())
}

/// Independent annealing runs; `log Ẑ = log Z_0 + log mean_r w_r`.
pub fn run_ais(graph: &FactorGraph, ladder: &Ladder, cfg: &AisConfig) -> Result<AisOutput> {
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let target = AnnealedTarget::new(graph)?;
    let streams = RngStreams::new(cfg.seed);
    let betas = ladder.betas();
    let results: Vec<Result<(f64, Counts)>> = par::map_indexed(cfg.exec, 1, cfg.runs, |r| {
        let s = streams.child(r as u64);
        let mut rng = s.stream(Lane::Anneal, 0, 0);
        let mut x = vec![0.0; graph.num_variables()];
        target.sample_base(&mut x, &mut rng);
        let mut sampler = SiteSampler::with_weights(graph, target.weights(0.0));
        let mut lw = 0.0;
        let mut c = Counts::default();
        for j in 1..betas.len() {
            lw += (betas[j] - betas[j - 1]) * target.log_ratio(&x);
            if j + 1 < betas.len() && cfg.sweeps > 0 {
                sampler.set_weights(&target.weights(betas[j]));
                sweep(&sampler, &mut x, cfg.sweeps, &mut rng, &mut c)?;
            }
        }
        Ok((lw, c))
    });
    let mut log_weights = Vec::with_capacity(cfg.runs);
    let mut total = Counts::default();
    for r in results {
        let (lw, c) = r?;
        log_weights.push(lw);
        total.updates += c.updates;
        total.proposals += c.proposals;
        total.accepts += c.accepts;
    }
    Ok(AisOutput {
        log_z: target.log_z0() + log_mean_exp(&log_weights),
        log_weights,
        site_updates: total.updates,
        metropolis_proposals: total.proposals,
        metropolis_accepts: total.accepts,
    })
}

/// Plain importance sampling from `π_0`; identical draws to [`run_ais`] with
/// ladder `(0, 1)`.
pub fn importance_sampling(graph: &FactorGraph, cfg: &AisConfig) -> Result<AisOutput> {
    run_ais(
        graph,
        &make_ladder(LadderKind::Linear, 1)?,
        &AisConfig {
            sweeps: 0,
            ..cfg.clone()
        },
    )
}

/// Annealing with `N` particles and multinomial resampling after each
/// reweighting; `Ẑ = Z_0 ∏_j mean_i w_j^i`.
pub fn run_asir(
    graph: &FactorGraph,
    ladder: &Ladder,
    particles: usize,
    sweeps: usize,
    seed: u64,
    exec: Exec,
) -> Result<AisOutput> {
    if particles == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    let target = AnnealedTarget::new(graph)?;
    let streams = RngStreams::new(seed);
    let width = graph.num_variables();
    let betas = ladder.betas();
    let mut cur = vec![0.0; particles * width];
    par::for_each_chunk(exec, par::DEFAULT_GRAIN, &mut cur, width, |i, x| {
        let mut rng = streams.stream(Lane::Anneal, 0, i as u64);
        target.sample_base(x, &mut rng);
    });
    let mut next = cur.clone();
    let mut lw = vec![0.0; particles];
    let mut slots: Vec<(Counts, Option<Error>)> =
        (0..particles).map(|_| (Counts::default(), None)).collect();
    let mut step_logs = Vec::with_capacity(ladder.steps());
    let mut log_z = target.log_z0();
    for j in 1..betas.len() {
        let db = betas[j] - betas[j - 1];
        par::for_each_chunk_with(
            exec,
            par::DEFAULT_GRAIN,
            &mut cur,
            width,
            &mut lw,
            |_, x, w| {
                *w = db * target.log_ratio(x);
            },
        );
        let step = log_mean_exp(&lw);
        if step == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights { step: j });
        }
        log_z += step;
        step_logs.push(step);
        if j + 1 == betas.len() {
            break;
        }
        let mut rng = streams.stream(Lane::Resample, j as u64, 0);
        let anc = resample_multinomial(&lw, particles, &mut rng)
            .map_err(|_| Error::DegenerateWeights { step: j })?;
        let weights = target.weights(betas[j]);
        let src = &cur;
        par::for_each_chunk_with(
            exec,
            par::DEFAULT_GRAIN,
            &mut next,
            width,
            &mut slots,
            |i, x, slot| {
                x.copy_from_slice(&src[anc[i] * width..(anc[i] + 1) * width]);
                if sweeps == 0 || slot.1.is_some() {
                    return;
                }
                let sampler = SiteSampler::with_weights(graph, weights.clone());
                let mut rng = streams.stream(Lane::Anneal, j as u64, i as u64);
                if let Err(e) = sweep(&sampler, x, sweeps, &mut rng, &mut slot.0) {
                    slot.1 = Some(e);
                }
            },
        );
        if let Some(e) = slots.iter_mut().find_map(|s| s.1.take()) {
            return Err(e);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let total = slots
        .iter()
        .map(|s| s.0)
        .fold(Counts::default(), |a, c| Counts {
            updates: a.updates + c.updates,
            proposals: a.proposals + c.proposals,
            accepts: a.accepts + c.accepts,
        });
    Ok(AisOutput {
        log_weights: step_logs,
        log_z,
        site_updates: total.updates,
        metropolis_proposals: total.proposals,
        metropolis_accepts: total.accepts,
    })
}
