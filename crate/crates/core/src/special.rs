//! Modified Bessel function `I_0` and the von Mises distribution.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::wrap_angle;
use crate::rng::StreamRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log I_0(κ)`: power series up to κ = 20, scaled asymptotic expansion above.
pub fn log_bessel_i0(kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "log I0 needs kappa >= 0, got {kappa}"
        )));
    }
    Ok(log_i0(kappa))
}

#[inline]
pub(crate) fn log_i0(kappa: f64) -> f64 {
    if kappa <= 20.0 {
        let q = 0.25 * kappa * kappa;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 1.0f64;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum.ln()
    } else {
        // I0(x) ~ e^x / sqrt(2πx) · Σ_k ((2k−1)!!)² / (k! (8x)^k)
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 1.0f64;
        loop {
            let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * kappa);
            if next > term || next < 1e-18 * sum {
                if next <= term {
                    sum += next;
                }
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        kappa - 0.5 * (2.0 * PI * kappa).ln() + sum.ln()
    }
}

/// Von Mises parameters; `κ = 0` is the uniform distribution on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMisesParams {
    pub kappa: f64,
    pub mu: f64,
}

impl VonMisesParams {
    pub fn new(kappa: f64, mu: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "von Mises needs finite kappa >= 0 and finite mu (kappa={kappa}, mu={mu})"
            )));
        }
        Ok(Self {
            kappa,
            mu: wrap_angle(mu),
        })
    }

    /// Parameters with `κ e^{iμ} = c + i s`.
    pub fn from_resultant(c: f64, s: f64) -> Self {
        let kappa = c.hypot(s);
        let mu = if kappa == 0.0 {
            0.0
        } else {
            wrap_angle(s.atan2(c))
        };
        Self { kappa, mu }
    }

    /// `log(2π I_0(κ))`.
    pub fn log_normalizer(&self) -> f64 {
        LN_2PI + log_i0(self.kappa)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.kappa * (x - self.mu).cos() - self.log_normalizer()
    }

    /// Exact draw by rejection from a wrapped-Cauchy envelope, wrapped to
    /// `(−π, π]`.
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        sample_von_mises(self, rng)
    }
}

pub fn sample_von_mises(p: &VonMisesParams, rng: &mut StreamRng) -> f64 {
    let kappa = p.kappa;
    if kappa < 1e-8 {
        return PI - 2.0 * PI * rng.random::<f64>();
    }
    let s = if kappa < 1e-5 {
        1.0 / kappa + kappa
    } else {
        let r = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
        let rho = (r - (2.0 * r).sqrt()) / (2.0 * kappa);
        (1.0 + rho * rho) / (2.0 * rho)
    };
    let w = loop {
        let u: f64 = rng.random();
        let z = (PI * u).cos();
        let w = (1.0 + s * z) / (s + z);
        let y = kappa * (s - w);
        let v: f64 = rng.random();
        if y * (2.0 - y) - v >= 0.0 || (y / v).ln() + 1.0 - y >= 0.0 {
            break w;
        }
    };
    let theta = w.clamp(-1.0, 1.0).acos();
    let signed = if rng.random::<f64>() < 0.5 {
        -theta
    } else {
        theta
    };
    wrap_angle(signed + p.mu)
}
