use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    #[default]
    Multinomial,
    Systematic,
}

fn cumulative(log_probs: &[f64]) -> Option<Vec<f64>> {
    let lse = log_sum_exp(log_probs);
    if !lse.is_finite() {
        return None;
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = log_probs
        .iter()
        .map(|&lp| {
            acc += (lp - lse).exp();
            acc
        })
        .collect();
    // force the last non-zero bin to close the interval
    if let Some(last) = log_probs.iter().rposition(|&lp| lp > f64::NEG_INFINITY) {
        for c in &mut cdf[last..] {
            *c = 1.0;
        }
    }
    Some(cdf)
}

#[inline]
fn locate(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// `n` independent categorical draws with probabilities `∝ exp(log_probs)`.
pub fn resample_multinomial(
    log_probs: &[f64],
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let cdf = cumulative(log_probs).ok_or(Error::DegenerateWeights { step: 0 })?;
    Ok((0..n).map(|_| locate(&cdf, rng.random::<f64>())).collect())
}

/// Systematic resampling: one uniform offset, `n` evenly spaced points.
pub fn resample_systematic(log_probs: &[f64], n: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let cdf = cumulative(log_probs).ok_or(Error::DegenerateWeights { step: 0 })?;
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while j + 1 < cdf.len() && cdf[j] <= u {
            j += 1;
        }
        out.push(j);
    }
    Ok(out)
}

/// A single categorical draw.
pub fn sample_categorical(log_probs: &[f64], rng: &mut StreamRng) -> Result<usize> {
    let cdf = cumulative(log_probs).ok_or(Error::DegenerateWeights { step: 0 })?;
    Ok(locate(&cdf, rng.random::<f64>()))
}

pub fn resample(
    scheme: ResamplingScheme,
    log_probs: &[f64],
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    match scheme {
        ResamplingScheme::Multinomial => resample_multinomial(log_probs, n, rng),
        ResamplingScheme::Systematic => resample_systematic(log_probs, n, rng),
    }
}
