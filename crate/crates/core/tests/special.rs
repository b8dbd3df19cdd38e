use std::f64::consts::PI;

use factor_smc::rng::{Lane, RngStreams};
use factor_smc::special::{log_bessel_i0, VonMisesParams};

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `log I_ν(κ)` for ν = 0, 1 from `I_ν(κ) = (1/π) ∫_0^π e^{κ cos t} cos(νt) dt`,
/// with the `e^κ` factor pulled out.
fn log_bessel_quadrature(nu: f64, kappa: f64) -> f64 {
    let s = simpson(|t| (kappa * (t.cos() - 1.0)).exp() * (nu * t).cos(), 0.0, PI, 20_000);
    kappa + (s / PI).ln()
}

#[test]
fn bessel_matches_quadrature() {
    for kappa in [1.0, 100.0] {
        let want = log_bessel_quadrature(0.0, kappa);
        let got = log_bessel_i0(kappa).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "κ = {kappa}: {got} vs {want}");
    }
    // both branches and the switch region
    for kappa in [0.01, 0.5, 5.0, 19.9, 20.1, 35.0, 700.0] {
        let want = log_bessel_quadrature(0.0, kappa);
        let got = log_bessel_i0(kappa).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "κ = {kappa}: {got} vs {want}");
    }
    // no overflow far beyond e^709
    let big = log_bessel_i0(1e5).unwrap();
    assert!((big - (1e5 - 0.5 * (2.0 * PI * 1e5).ln())).abs() < 1e-5);
}

#[test]
fn density_integrates_to_one() {
    for (kappa, mu) in [(0.0, 0.0), (0.7, 1.0), (30.0, -2.5)] {
        let p = VonMisesParams::new(kappa, mu).unwrap();
        let total = simpson(|x| p.log_density(x).exp(), -PI, PI, 20_000);
        assert!((total - 1.0).abs() < 1e-10, "κ = {kappa}: {total}");
    }
    assert!(VonMisesParams::new(-1.0, 0.0).is_err());
    assert!(VonMisesParams::new(1.0, f64::NAN).is_err());
}

/// CDF on `(−π, π]` tabulated by cumulative Simpson steps.
fn cdf_table(p: &VonMisesParams, n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    let mut out = vec![0.0; n + 1];
    for i in 0..n {
        let a = -PI + i as f64 * h;
        out[i + 1] = out[i] + simpson(|x| p.log_density(x).exp(), a, a + h, 8);
    }
    out
}

fn draws(p: &VonMisesParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStreams::new(seed).stream(Lane::Misc, 0, 0);
    (0..n).map(|_| p.sample(&mut rng)).collect()
}

#[test]
fn sampler_passes_kolmogorov_smirnov() {
    let n = 20_000;
    let grid = 4096;
    for (i, (kappa, mu)) in [(0.0, 0.0), (0.3, 2.0), (2.0, -1.0), (60.0, 3.1)].into_iter().enumerate() {
        let p = VonMisesParams::new(kappa, mu).unwrap();
        let table = cdf_table(&p, grid);
        let mut xs = draws(&p, n, 40 + i as u64);
        assert!(xs.iter().all(|&x| x > -PI && x <= PI));
        xs.sort_by(f64::total_cmp);
        let cdf = |x: f64| {
            let u = (x + PI) / (2.0 * PI) * grid as f64;
            let j = (u.floor() as usize).min(grid - 1);
            table[j] + (u - j as f64) * (table[j + 1] - table[j])
        };
        let d = xs
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let f = cdf(x);
                (f - j as f64 / n as f64).max((j + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max);
        // 0.1% critical value
        assert!(d < 1.95 / (n as f64).sqrt(), "κ = {kappa}: D = {d}");
    }
}

#[test]
fn sampler_mean_resultant() {
    // E[cos(x − μ)] = I_1(κ) / I_0(κ), E[sin(x − μ)] = 0
    let n = 50_000;
    for (i, kappa) in [0.5, 4.0, 25.0].into_iter().enumerate() {
        let mu = 0.8;
        let p = VonMisesParams::new(kappa, mu).unwrap();
        let xs = draws(&p, n, 90 + i as u64);
        let c = xs.iter().map(|x| (x - mu).cos()).sum::<f64>() / n as f64;
        let s = xs.iter().map(|x| (x - mu).sin()).sum::<f64>() / n as f64;
        let a = (log_bessel_quadrature(1.0, kappa) - log_bessel_quadrature(0.0, kappa)).exp();
        // variance of cos and sin is at most 1/2
        let se = (0.5 / n as f64).sqrt();
        assert!((c - a).abs() < 4.0 * se, "κ = {kappa}: {c} vs {a}");
        assert!(s.abs() < 4.0 * se, "κ = {kappa}: sin mean {s}");
    }
}
