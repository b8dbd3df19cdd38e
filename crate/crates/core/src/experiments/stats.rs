//! Chain and estimator statistics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `ρ(τ) = [Σ_t (x_t − μ)(x_{t+τ} − μ)/(T − τ)] / [Σ_t (x_t − μ)²/T]` for
/// `τ = 0..=max_lag`, with `μ` supplied (e.g. an exact posterior mean).
pub fn compute_acf(values: &[f64], center: f64, max_lag: usize) -> Result<Vec<f64>> {
    let t = values.len();
    if t <= max_lag {
        return Err(Error::ShortChain { len: t, max_lag });
    }
    let d: Vec<f64> = values.iter().map(|x| x - center).collect();
    let c0 = d.iter().map(|x| x * x).sum::<f64>() / t as f64;
    Ok((0..=max_lag)
        .map(|tau| {
            let c = d[..t - tau]
                .iter()
                .zip(&d[tau..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / (t - tau) as f64;
            c / c0
        })
        .collect())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Standard error of the mean of independent values.
pub fn standard_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Integrated autocorrelation time `1 + 2 Σ_{τ≥1} ρ(τ)`, summed up to the
/// first window `M ≥ 5 τ̂(M)` (centered at the sample mean).
pub fn integrated_autocorr_time(values: &[f64]) -> Result<f64> {
    let t = values.len();
    if t < 10 {
        return Err(Error::InsufficientData { needed: 10, got: t });
    }
    let m = mean(values);
    let d: Vec<f64> = values.iter().map(|x| x - m).collect();
    let c0 = d.iter().map(|x| x * x).sum::<f64>() / t as f64;
    if c0 == 0.0 {
        return Ok(1.0);
    }
    let mut tau = 1.0;
    for lag in 1..t / 2 {
        let c = d[..t - lag]
            .iter()
            .zip(&d[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / t as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    Ok(tau.max(1.0))
}

/// Monte Carlo standard error of a chain mean, `√(var · τ / T)`.
pub fn mcmc_standard_error(values: &[f64]) -> Result<f64> {
    let tau = integrated_autocorr_time(values)?;
    Ok((variance(values) * tau / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub mean: f64,
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(
    values: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap level {level}, {resamples} resamples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * resamples as f64).floor() as usize).min(resamples - 1)];
    let a = (1.0 - level) / 2.0;
    let m = mean(values);
    Ok(BootstrapInterval {
        low: q(a).min(m),
        high: q(1.0 - a).max(m),
        mean: m,
    })
}

/// Mean squared error of the estimates in each group against `reference`.
pub fn mse_table<K: Ord + Clone>(
    estimates: &[(K, f64)],
    reference: Option<f64>,
) -> Result<Vec<(K, f64)>> {
    let r =
        reference.ok_or_else(|| Error::MissingReference("no reference value for MSE".into()))?;
    let mut groups: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (k, v) in estimates {
        let e = groups.entry(k.clone()).or_insert((0.0, 0));
        e.0 += (v - r) * (v - r);
        e.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(k, (s, c))| (k, s / c as f64))
        .collect())
}

/// `log Ẑ` replicates against an exact `log Z`: mean and standard error of
/// `Ẑ/Z`, and whether the mean lies within `k` standard errors of one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessCheck {
    pub ratio_mean: f64,
    pub ratio_se: f64,
    pub passed: bool,
}

pub fn check_unbiased(log_estimates: &[f64], exact_log: f64, k: f64) -> Result<UnbiasednessCheck> {
    if log_estimates.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: log_estimates.len(),
        });
    }
    let ratios: Vec<f64> = log_estimates
        .iter()
        .map(|l| (l - exact_log).exp())
        .collect();
    let ratio_mean = mean(&ratios);
    let ratio_se = standard_error(&ratios);
    Ok(UnbiasednessCheck {
        ratio_mean,
        ratio_se,
        passed: (ratio_mean - 1.0).abs() <= k * ratio_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn acf_examples() {
        let v = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert_abs_diff_eq!(compute_acf(&v, 3.0, 2).unwrap()[0], 1.0, epsilon = 1e-15);
        assert!(matches!(
            compute_acf(&v, 0.0, 5),
            Err(Error::ShortChain { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..100_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        assert!(compute_acf(&iid, 0.0, 1).unwrap()[1].abs() < 0.01);

        let mut x = 0.0;
        let ar: Vec<f64> = (0..100_000)
            .map(|_| {
                x = 0.9 * x + Distribution::<f64>::sample(&StandardNormal, &mut rng);
                x
            })
            .collect();
        assert_abs_diff_eq!(compute_acf(&ar, 0.0, 1).unwrap()[1], 0.9, epsilon = 0.02);
        // AR(1): τ = (1 + φ)/(1 − φ) = 19
        let tau = integrated_autocorr_time(&ar).unwrap();
        assert!((tau - 19.0).abs() < 3.0, "{tau}");
    }

    #[test]
    fn bootstrap_examples() {
        let c = bootstrap_ci(&[2.5; 10], 1000, 0.95, 1).unwrap();
        assert_eq!((c.low, c.high, c.mean), (2.5, 2.5, 2.5));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c = bootstrap_ci(&v, 10_000, 0.95, 3).unwrap();
        assert!(c.low <= c.mean && c.mean <= c.high);
        let reference = 2.0 * 1.96 / 1000f64.sqrt();
        assert!(((c.high - c.low) / reference - 1.0).abs() < 0.2);
        assert!(bootstrap_ci(&[1.0], 10, 0.95, 0).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            mse_table(&[("a", 1.0), ("a", 1.0)], Some(1.0)).unwrap(),
            vec![("a", 0.0)]
        );
        assert_eq!(
            mse_table(&[("a", 3.0)], Some(1.0)).unwrap(),
            vec![("a", 4.0)]
        );
        assert_eq!(
            mse_table(&[("a", 0.0), ("a", 2.0)], Some(1.0)).unwrap(),
            vec![("a", 1.0)]
        );
        assert!(matches!(
            mse_table(&[("a", 0.0)], None),
            Err(Error::MissingReference(_))
        ));
    }
}
