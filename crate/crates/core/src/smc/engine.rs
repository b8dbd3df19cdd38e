//! The auxiliary SMC sampler over a sequential decomposition.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::proposal::Proposal;
use super::resample::{resample, ResamplingScheme};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::logspace::{effective_sample_size, log_mean_exp};
use crate::par::{self, Exec};
use crate::pmcmc::ancestor::{reduced_ancestor_log_weights_into, DependencySets};
use crate::rng::{Lane, RngStreams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub particles: usize,
    pub seed: u64,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    /// Resample only when `ESS < threshold · N`. `None` resamples at every step.
    #[serde(default)]
    pub ess_threshold: Option<f64>,
    #[serde(default)]
    pub exec: Exec,
    /// Minimum particle count before a step is spread over threads.
    #[serde(default = "default_grain")]
    pub grain: usize,
}

fn default_grain() -> usize {
    par::DEFAULT_GRAIN
}

impl SmcConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            resampling: ResamplingScheme::Multinomial,
            ess_threshold: None,
            exec: Exec::Parallel,
            grain: par::DEFAULT_GRAIN,
        }
    }

    pub fn sequential(mut self) -> Self {
        self.exec = Exec::Sequential;
        self
    }
}

/// Per-step record of a run. Step `k` is stored at index `k − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// `log w_k^i`.
    pub log_weights: Vec<f64>,
    /// `log ν_k^i` used when resampling into step `k + 1` (zero at `k = K`
    /// and before empty-increment steps).
    pub log_adjustments: Vec<f64>,
    /// `a_k^i`; the identity at step 1 and at steps without resampling.
    pub ancestors: Vec<usize>,
    /// Whether ancestors were drawn on entry to this step.
    pub resampled: bool,
    pub ess: f64,
    /// Running `log Ẑ_k`.
    pub log_z_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub num_particles: usize,
    /// Values per particle (the graph's variable count).
    pub width: usize,
    /// `log ν_0`, the constant initial adjustment.
    pub log_initial_adjustment: f64,
    pub steps: Vec<StepRecord>,
    /// Final trajectories `X_{L_K}^i`, row-major, one row of `width` values
    /// per particle.
    pub particles: Vec<f64>,
}

impl ParticleSystem {
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.width..(i + 1) * self.width]
    }

    pub fn final_log_weights(&self) -> &[f64] {
        &self.steps.last().expect("non-empty run").log_weights
    }

    /// Ancestor of particle `i` at step `k` obtained by tracing the lineage
    /// back from the final step.
    pub fn lineage(&self, i: usize) -> Vec<usize> {
        let mut idx = i;
        let mut out = vec![0; self.steps.len()];
        for (k, step) in self.steps.iter().enumerate().rev() {
            out[k] = idx;
            idx = step.ancestors[idx];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZEstimate {
    /// `log Ẑ_k^N`, indexed by step − 1.
    pub log_z: Vec<f64>,
}

impl ZEstimate {
    pub fn final_log_z(&self) -> f64 {
        *self.log_z.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct SmcOutput {
    pub system: ParticleSystem,
    pub z: ZEstimate,
    /// Wall-clock nanoseconds spent in each step.
    pub wall_ns: Vec<u64>,
}

/// Log of the partition estimate after step `k`, recomputed from the stored
/// weights:
/// `log ν_0 + log[(1/N)Σ w_k] + Σ_{ℓ<k, resampled into ℓ+1} log[(1/N)Σ ν_ℓ w_ℓ]`.
pub fn estimate_log_partition(sys: &ParticleSystem, k: usize) -> f64 {
    let mut lz = sys.log_initial_adjustment;
    for l in 1..k {
        if sys.steps[l].resampled {
            let prev = &sys.steps[l - 1];
            let joint: Vec<f64> = prev
                .log_weights
                .iter()
                .zip(&prev.log_adjustments)
                .map(|(w, a)| w + a)
                .collect();
            lz += log_mean_exp(&joint);
        }
    }
    lz + log_mean_exp(&sys.steps[k - 1].log_weights)
}

/// `log W_k = log γ_k − log γ_{k−1} − log ν_{k−1} − log r_k` at the particle
/// `x` (which must hold `X_{L_k}`), for `k ≥ 2`.
pub fn log_weight(d: &Decomposition, p: &dyn Proposal, k: usize, prev: &[f64], x: &[f64]) -> f64 {
    d.log_gamma_increment(k, x)
        - p.log_adjustment(d, k - 1, prev)
        - p.log_increment_density(d, k, x)
}

/// Reference trajectory for conditional SMC.
pub(crate) struct Conditioning<'a> {
    pub reference: &'a [f64],
    pub deps: &'a DependencySets,
    /// Draw the reference's ancestors (PGAS) rather than keep its own lineage.
    pub ancestor_sampling: bool,
}

/// Run the sampler. Particles start from `template` (context values, NaN
/// elsewhere) when given.
pub fn run_smc(d: &Decomposition, p: &dyn Proposal, cfg: &SmcConfig) -> Result<SmcOutput> {
    let template = vec![f64::NAN; d.graph().num_variables()];
    run_from(d, p, cfg, &template, &RngStreams::new(cfg.seed), None)
}

/// As [`run_smc`], with context values supplied by `template`.
pub fn run_smc_with_context(
    d: &Decomposition,
    p: &dyn Proposal,
    cfg: &SmcConfig,
    template: &[f64],
) -> Result<SmcOutput> {
    run_from(d, p, cfg, template, &RngStreams::new(cfg.seed), None)
}

struct Slot {
    log_weight: f64,
    log_adjustment: f64,
    err: Option<Error>,
}

impl Default for Slot {
    fn default() -> Self {
        Slot {
            log_weight: f64::NAN,
            log_adjustment: 0.0,
            err: None,
        }
    }
}

pub(crate) fn run_from(
    d: &Decomposition,
    p: &dyn Proposal,
    cfg: &SmcConfig,
    template: &[f64],
    streams: &RngStreams,
    cond: Option<&Conditioning<'_>>,
) -> Result<SmcOutput> {
    let n = cfg.particles;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "particle count must be at least 1".into(),
        ));
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("decomposition has no steps".into()));
    }
    let kmax = d.len();
    let width = d.graph().num_variables();
    if template.len() != width {
        return Err(Error::InvalidArgument("template width mismatch".into()));
    }
    let ref_slot = cond.map(|_| n - 1);
    let mut cur: Vec<f64> = template.repeat(n);
    let mut next = cur.clone();
    let mut slots: Vec<Slot> = (0..n).map(|_| Slot::default()).collect();
    let mut records: Vec<StepRecord> = Vec::with_capacity(kmax);
    let mut wall_ns = Vec::with_capacity(kmax);
    let mut log_z = Vec::with_capacity(kmax);

    let log_nu0 = p.log_adjustment(d, 0, template);
    if !log_nu0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "initial adjustment is not finite ({log_nu0})"
        )));
    }
    let mut log_z_base = log_nu0;

    for k in 1..=kmax {
        let start = Instant::now();
        let empty = d.step(k).new_vars.is_empty();
        let adjust_next = k < kmax && !d.step(k + 1).new_vars.is_empty();

        // ancestor indices and carried-over log-weight terms
        let (ancestors, resampled, carried): (Vec<usize>, bool, Vec<f64>) = if k == 1 {
            ((0..n).collect(), false, vec![-log_nu0; n])
        } else {
            let prev = records.last().unwrap();
            if empty {
                ((0..n).collect(), false, prev.log_weights.clone())
            } else {
                let joint: Vec<f64> = prev
                    .log_weights
                    .iter()
                    .zip(&prev.log_adjustments)
                    .map(|(w, a)| w + a)
                    .collect();
                let keep = cond.is_none()
                    && cfg
                        .ess_threshold
                        .is_some_and(|t| effective_sample_size(&joint) >= t * n as f64);
                if keep {
                    // ν cancels between the resampling weight and W_k
                    ((0..n).collect(), false, prev.log_weights.clone())
                } else {
                    let mut rng = streams.stream(Lane::Resample, k as u64, 0);
                    let draws = n - ref_slot.map_or(0, |_| 1);
                    let mut a = resample(cfg.resampling, &joint, draws, &mut rng)
                        .map_err(|_| Error::DegenerateWeights { step: k - 1 })?;
                    if let (Some(c), Some(slot)) = (cond, ref_slot) {
                        let anc = if c.ancestor_sampling {
                            let mut lw = vec![0.0; n];
                            reduced_ancestor_log_weights_into(
                                d,
                                k,
                                &cur,
                                width,
                                &prev.log_weights,
                                c.reference,
                                c.deps,
                                &mut lw,
                            );
                            let mut arng = streams.stream(Lane::Ancestor, k as u64, 0);
                            super::resample::sample_categorical(&lw, &mut arng)
                                .map_err(|_| Error::DegenerateWeights { step: k - 1 })?
                        } else {
                            slot
                        };
                        a.push(anc);
                    }
                    let carried = a.iter().map(|&j| -prev.log_adjustments[j]).collect();
                    (a, true, carried)
                }
            }
        };

        let cur_ref = &cur;
        let anc_ref = &ancestors;
        let carried_ref = &carried;
        par::for_each_chunk_with(
            cfg.exec,
            cfg.grain,
            &mut next,
            width,
            &mut slots,
            |i, row, slot| {
                let a = anc_ref[i];
                row.copy_from_slice(&cur_ref[a * width..(a + 1) * width]);
                *slot = Slot::default();
                let log_r = if empty {
                    0.0
                } else if ref_slot == Some(i) {
                    let reference = cond.unwrap().reference;
                    for &v in &d.step(k).new_vars {
                        row[v] = reference[v];
                    }
                    p.log_increment_density(d, k, row)
                } else {
                    let mut rng = streams.stream(Lane::Propagate, k as u64, i as u64);
                    match p.sample_increment(d, k, row, &mut rng) {
                        Ok(lr) => lr,
                        Err(e) => {
                            slot.err = Some(e);
                            return;
                        }
                    }
                };
                let lw = carried_ref[i] + d.log_gamma_increment(k, row) - log_r;
                slot.log_weight = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
                slot.log_adjustment = if adjust_next {
                    p.log_adjustment(d, k, row)
                } else {
                    0.0
                };
            },
        );

        if let Some(e) = slots.iter_mut().find_map(|s| s.err.take()) {
            return Err(e);
        }
        std::mem::swap(&mut cur, &mut next);

        let log_weights: Vec<f64> = slots.iter().map(|s| s.log_weight).collect();
        let log_adjustments: Vec<f64> = slots
            .iter()
            .map(|s| {
                if s.log_adjustment.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    s.log_adjustment
                }
            })
            .collect();
        if log_weights.iter().all(|&w| w == f64::NEG_INFINITY) {
            return Err(Error::DegenerateWeights { step: k });
        }
        if resampled {
            let prev = records.last().unwrap();
            let joint: Vec<f64> = prev
                .log_weights
                .iter()
                .zip(&prev.log_adjustments)
                .map(|(w, a)| w + a)
                .collect();
            log_z_base += log_mean_exp(&joint);
        }
        let lz = log_z_base + log_mean_exp(&log_weights);
        log_z.push(lz);
        records.push(StepRecord {
            ess: effective_sample_size(&log_weights),
            log_weights,
            log_adjustments,
            ancestors,
            resampled,
            log_z_hat: lz,
        });
        wall_ns.push(start.elapsed().as_nanos() as u64);
    }

    Ok(SmcOutput {
        system: ParticleSystem {
            num_particles: n,
            width,
            log_initial_adjustment: log_nu0,
            steps: records,
            particles: cur,
        },
        z: ZEstimate { log_z },
        wall_ns,
    })
}
