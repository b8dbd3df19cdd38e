//! Exact single-site conditionals (with a random-walk Metropolis fallback)
//! for possibly tempered factor products `∏_C ψ_C^{w_C}`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{wrap_angle, Domain, FactorGraph, Potential, VarId};
use crate::logspace::log_sum_exp;
use crate::rng::StreamRng;
use crate::smc::resample::sample_categorical;
use crate::special::VonMisesParams;

/// How a single-site update was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteMove {
    Exact,
    Metropolis { accepted: bool },
}

#[derive(Debug, Clone)]
pub struct SiteSampler<'g> {
    graph: &'g FactorGraph,
    /// Exponent applied to each factor's potential.
    weights: Vec<f64>,
    pub allow_metropolis: bool,
    pub rw_scale: f64,
}

impl<'g> SiteSampler<'g> {
    /// Untempered conditionals of the full factor product.
    pub fn new(graph: &'g FactorGraph) -> Self {
        Self {
            graph,
            weights: vec![1.0; graph.num_factors()],
            allow_metropolis: true,
            rw_scale: 1.0,
        }
    }

    /// Factor exponents `w_C`.
    pub fn with_weights(graph: &'g FactorGraph, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), graph.num_factors());
        Self {
            graph,
            weights,
            allow_metropolis: true,
            rw_scale: 1.0,
        }
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        self.weights.copy_from_slice(weights);
    }

    fn local_log_density(&self, v: VarId, x: &[f64]) -> f64 {
        self.graph
            .factors_of(v)
            .iter()
            .map(|&f| {
                let w = self.weights[f];
                if w == 0.0 {
                    0.0
                } else {
                    w * self.graph.factor(f).log_value(x)
                }
            })
            .sum()
    }

    /// Resample `x[v]` from its conditional given the other entries of `x`.
    pub fn update(&self, v: VarId, x: &mut [f64], rng: &mut StreamRng) -> Result<SiteMove> {
        match self.graph.domain(v) {
            Domain::Discrete { cardinality } => {
                let lp: Vec<f64> = (0..cardinality)
                    .map(|s| {
                        x[v] = s as f64;
                        self.local_log_density(v, x)
                    })
                    .collect();
                let s = sample_categorical(&lp, rng)
                    .map_err(|_| Error::DegenerateWeights { step: 0 })?;
                x[v] = s as f64;
                Ok(SiteMove::Exact)
            }
            Domain::Angle => match self.von_mises(v, x) {
                Some(p) => {
                    x[v] = p.sample(rng);
                    Ok(SiteMove::Exact)
                }
                None => self.metropolis(v, x, rng),
            },
            Domain::Real => match self.gaussian(v, x) {
                Some((mean, prec)) if prec > 0.0 => {
                    let z: f64 = rng.sample(StandardNormal);
                    x[v] = mean + z / prec.sqrt();
                    Ok(SiteMove::Exact)
                }
                Some(_) => Err(Error::KernelUnavailable(v)),
                None => self.metropolis(v, x, rng),
            },
        }
    }

    /// Von Mises conditional when every factor at `v` is an XY coupling or a constant.
    pub fn von_mises(&self, v: VarId, x: &[f64]) -> Option<VonMisesParams> {
        let (mut c, mut s) = (0.0, 0.0);
        for &f in self.graph.factors_of(v) {
            let factor = self.graph.factor(f);
            match factor.potential() {
                Potential::XyPair { coupling } => {
                    let other = if factor.clique()[0] == v {
                        factor.clique()[1]
                    } else {
                        factor.clique()[0]
                    };
                    let k = self.weights[f] * coupling;
                    c += k * x[other].cos();
                    s += k * x[other].sin();
                }
                Potential::Constant { .. } => {}
                _ => return None,
            }
        }
        Some(VonMisesParams::from_resultant(c, s))
    }

    /// `(mean, precision)` of the Gaussian conditional, when every factor at
    /// `v` is Gaussian or constant.
    pub fn gaussian(&self, v: VarId, x: &[f64]) -> Option<(f64, f64)> {
        let (mut prec, mut lin) = (0.0, 0.0);
        for &f in self.graph.factors_of(v) {
            let factor = self.graph.factor(f);
            let w = self.weights[f];
            match factor.potential() {
                Potential::GaussianObs { y, sigma } => {
                    let t = w / (sigma * sigma);
                    prec += t;
                    lin += t * y;
                }
                Potential::GaussianPair { sigma } => {
                    let other = if factor.clique()[0] == v {
                        factor.clique()[1]
                    } else {
                        factor.clique()[0]
                    };
                    let t = w / (sigma * sigma);
                    prec += t;
                    lin += t * x[other];
                }
                Potential::Constant { .. } => {}
                _ => return None,
            }
        }
        Some((if prec > 0.0 { lin / prec } else { 0.0 }, prec))
    }

    fn metropolis(&self, v: VarId, x: &mut [f64], rng: &mut StreamRng) -> Result<SiteMove> {
        if !self.allow_metropolis {
            return Err(Error::KernelUnavailable(v));
        }
        let old = x[v];
        let lp_old = self.local_log_density(v, x);
        let step: f64 = rng.sample::<f64, _>(StandardNormal) * self.rw_scale;
        x[v] = match self.graph.domain(v) {
            Domain::Angle => wrap_angle(old + step),
            _ => old + step,
        };
        let lp_new = self.local_log_density(v, x);
        let u: f64 = rng.random();
        let accepted = u.ln() < lp_new - lp_old;
        if !accepted {
            x[v] = old;
        }
        Ok(SiteMove::Metropolis { accepted })
    }

    /// Log normalizer of the discrete conditional at `v` (testing aid).
    pub fn discrete_log_normalizer(&self, v: VarId, x: &mut [f64]) -> Option<f64> {
        let card = self.graph.domain(v).cardinality()?;
        let lp: Vec<f64> = (0..card)
            .map(|s| {
                x[v] = s as f64;
                self.local_log_density(v, x)
            })
            .collect();
        Some(log_sum_exp(&lp))
    }
}
