//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zll_core::{PricePoint, PriceSeries};

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

const Z_MAX: f64 = 12.0;
const PANELS: usize = 20_000;

/// Zero-rate call by integrating the payoff against the lognormal terminal
/// distribution. The integration domain starts at the kink so the integrand
/// is smooth.
pub fn call_by_quadrature(spot: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    let v = sigma * tau.sqrt();
    if v == 0.0 || strike == 0.0 {
        return (spot - strike).max(0.0);
    }
    let terminal = |z: f64| spot * (-0.5 * v * v + v * z).exp();
    let z_kink = ((strike / spot).ln() + 0.5 * v * v) / v;
    let lo = z_kink.max(-Z_MAX);
    simpson(|z| (terminal(z) - strike) * phi(z), lo, Z_MAX.max(lo), PANELS)
}

pub fn put_by_quadrature(spot: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    let v = sigma * tau.sqrt();
    if v == 0.0 || strike == 0.0 {
        return (strike - spot).max(0.0);
    }
    let terminal = |z: f64| spot * (-0.5 * v * v + v * z).exp();
    let z_kink = ((strike / spot).ln() + 0.5 * v * v) / v;
    let hi = z_kink.min(Z_MAX);
    simpson(|z| (strike - terminal(z)) * phi(z), -Z_MAX, hi.max(-Z_MAX), PANELS)
}

/// Geometric Brownian motion with zero drift sampled every `step_secs`.
pub fn gbm_series(seed: u64, s0: f64, sigma: f64, start: i64, step_secs: i64, steps: usize) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = step_secs as f64 / (365.0 * 86_400.0);
    let mut price = s0;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(PricePoint {
        timestamp: start,
        price,
    });
    for i in 1..=steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        price *= (-0.5 * sigma * sigma * dt + sigma * dt.sqrt() * z).exp();
        points.push(PricePoint {
            timestamp: start + i as i64 * step_secs,
            price,
        });
    }
    PriceSeries::new(points).unwrap()
}

pub fn real_series_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sp500_daily_2017_2018.csv")
}
