//! Proposal kernels `r_k` and adjustment multipliers `ν_k`.

use std::f64::consts::PI;

use rand::Rng;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::graph::{for_each_joint_state, Domain};
use crate::logspace::log_sum_exp;
use crate::rng::StreamRng;

/// Proposal for the increments `ξ_k` of a decomposition.
///
/// Particle values live in a flat slice indexed by variable id; on entry to
/// [`Proposal::sample_increment`] the slice holds `X_{L_{k−1}}` plus any
/// context variables, and the proposal writes the values of `ξ_k`.
pub trait Proposal: Send + Sync {
    /// Draw `ξ_k` into `x` and return `log r_k(ξ_k | X_{L_{k−1}})`. `k` counts
    /// from 1; `k = 1` is the initial importance-sampling step.
    fn sample_increment(
        &self,
        d: &Decomposition,
        k: usize,
        x: &mut [f64],
        rng: &mut StreamRng,
    ) -> Result<f64>;

    /// `log r_k` of the increment already present in `x`.
    fn log_increment_density(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64;

    /// `log ν_k(X_{L_k})`, the multiplier used when resampling into step
    /// `k + 1`. At `k = 0` this is a constant folded into the partition
    /// estimate, evaluated on the context-only template.
    fn log_adjustment(&self, _d: &Decomposition, _k: usize, _x: &[f64]) -> f64 {
        0.0
    }

    /// Whether `(r_k, ν_{k−1})` satisfy the full-adaptation identities, making
    /// every importance weight identically one.
    fn is_adapted(&self) -> bool {
        false
    }
}

/// Independent uniform draws for every new variable. Supports discrete and
/// angle domains.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProposal;

impl UniformProposal {
    fn log_volume(d: &Decomposition, k: usize) -> Result<f64> {
        let mut lv = 0.0;
        for &v in &d.step(k).new_vars {
            lv += match d.graph().domain(v) {
                Domain::Discrete { cardinality } => (cardinality as f64).ln(),
                Domain::Angle => (2.0 * PI).ln(),
                Domain::Real => {
                    return Err(Error::UnsupportedDomain(format!(
                        "uniform proposal on real variable {v}"
                    )))
                }
            };
        }
        Ok(lv)
    }
}

impl Proposal for UniformProposal {
    fn sample_increment(
        &self,
        d: &Decomposition,
        k: usize,
        x: &mut [f64],
        rng: &mut StreamRng,
    ) -> Result<f64> {
        let lv = Self::log_volume(d, k)?;
        for &v in &d.step(k).new_vars {
            x[v] = match d.graph().domain(v) {
                Domain::Discrete { cardinality } => rng.random_range(0..cardinality) as f64,
                Domain::Angle => PI - 2.0 * PI * rng.random::<f64>(),
                Domain::Real => unreachable!(),
            };
        }
        Ok(-lv)
    }

    fn log_increment_density(&self, d: &Decomposition, k: usize, _x: &[f64]) -> f64 {
        Self::log_volume(d, k).map(|lv| -lv).unwrap_or(f64::NAN)
    }
}

/// Fully adapted proposal for discrete increments: enumerates the joint
/// states of `ξ_k`, proposes `r_k ∝ γ_k / γ_{k−1}` and sets
/// `ν_{k−1} = Σ_{ξ_k} γ_k / γ_{k−1}`.
#[derive(Debug, Clone, Copy)]
pub struct EnumeratedProposal {
    /// Largest increment state space enumerated per step.
    pub cap: usize,
}

impl Default for EnumeratedProposal {
    fn default() -> Self {
        Self { cap: 1 << 16 }
    }
}

impl EnumeratedProposal {
    /// Log-increments `log γ_k − log γ_{k−1}` for every joint state of `ξ_k`,
    /// with `x` used as scratch (restored to NaN on the increment afterwards).
    fn increment_table(&self, d: &Decomposition, k: usize, x: &mut [f64]) -> Result<Vec<f64>> {
        let vars = &d.step(k).new_vars;
        let cards: Vec<usize> = vars
            .iter()
            .map(|&v| {
                d.graph().domain(v).cardinality().ok_or_else(|| {
                    Error::UnsupportedDomain(format!("enumerated proposal on variable {v}"))
                })
            })
            .collect::<Result<_>>()?;
        let size: usize = cards.iter().product();
        if size > self.cap {
            return Err(Error::DomainTooLarge {
                states: size as f64,
                cap: self.cap as u64,
            });
        }
        let mut table = Vec::with_capacity(size);
        for_each_joint_state(&cards, |s| {
            for (&v, &sv) in vars.iter().zip(s) {
                x[v] = sv;
            }
            table.push(d.log_gamma_increment(k, x));
        });
        Ok(table)
    }

    fn write_state(d: &Decomposition, k: usize, mut index: usize, x: &mut [f64]) {
        let vars = &d.step(k).new_vars;
        for &v in vars.iter().rev() {
            let c = d.graph().domain(v).cardinality().unwrap();
            x[v] = (index % c) as f64;
            index /= c;
        }
    }
}

impl Proposal for EnumeratedProposal {
    fn sample_increment(
        &self,
        d: &Decomposition,
        k: usize,
        x: &mut [f64],
        rng: &mut StreamRng,
    ) -> Result<f64> {
        let table = self.increment_table(d, k, x)?;
        let idx = super::resample::sample_categorical(&table, rng)
            .map_err(|_| Error::DegenerateWeights { step: k })?;
        Self::write_state(d, k, idx, x);
        Ok(table[idx] - log_sum_exp(&table))
    }

    fn log_increment_density(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        let mut scratch = x.to_vec();
        match self.increment_table(d, k, &mut scratch) {
            Ok(table) => d.log_gamma_increment(k, x) - log_sum_exp(&table),
            Err(_) => f64::NAN,
        }
    }

    fn log_adjustment(&self, d: &Decomposition, k: usize, x: &[f64]) -> f64 {
        if k >= d.len() {
            return 0.0;
        }
        let mut scratch = x.to_vec();
        self.increment_table(d, k + 1, &mut scratch)
            .map(|t| log_sum_exp(&t))
            .unwrap_or(f64::NAN)
    }

    fn is_adapted(&self) -> bool {
        true
    }
}
