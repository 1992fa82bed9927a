//! Option pricing kernel.
//!
//! The AMM never prices the embedded put fairly. It charges the "oblivious"
//! premium `alpha * 0.4 * S * sigma * sqrt(tau)`, a scaled first-order
//! approximation of the at-the-money put. Zero-rate Black-Scholes is the
//! reference model for the outside option market that arbitrageurs compare
//! against.

use libm::erfc;

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::types::{MarketParams, OptionQuote};

/// `1/sqrt(2*pi)` rounded the way the oblivious put formula does.
pub const ATM_PUT_FACTOR: f64 = 0.4;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Oblivious put premium per collateral unit.
pub fn oblivious_put_price(spot: f64, params: &MarketParams, tau_years: f64) -> Result<f64> {
    ensure_positive("spot", spot)?;
    ensure_non_negative("tau_years", tau_years)?;
    ensure_non_negative("alpha", params.alpha)?;
    ensure_non_negative("sigma", params.sigma)?;
    Ok(params.alpha * ATM_PUT_FACTOR * spot * params.sigma * tau_years.sqrt())
}

fn check_inputs(spot: f64, strike: f64, sigma: f64, tau_years: f64) -> Result<()> {
    ensure_positive("spot", spot)?;
    ensure_non_negative("strike", strike)?;
    ensure_non_negative("sigma", sigma)?;
    ensure_non_negative("tau_years", tau_years)
}

/// `(d1, d2)` or `None` when the option is at its intrinsic value.
fn d1_d2(spot: f64, strike: f64, sigma: f64, tau_years: f64) -> Option<(f64, f64)> {
    let vol = sigma * tau_years.sqrt();
    if vol == 0.0 || strike == 0.0 {
        return None;
    }
    let d1 = ((spot / strike).ln() + 0.5 * vol * vol) / vol;
    Some((d1, d1 - vol))
}

/// Zero-rate Black-Scholes call.
pub fn bs_call(spot: f64, strike: f64, sigma: f64, tau_years: f64) -> Result<f64> {
    check_inputs(spot, strike, sigma, tau_years)?;
    Ok(match d1_d2(spot, strike, sigma, tau_years) {
        None => (spot - strike).max(0.0),
        Some((d1, d2)) => (spot * norm_cdf(d1) - strike * norm_cdf(d2)).max(0.0),
    })
}

/// Zero-rate Black-Scholes put.
pub fn bs_put(spot: f64, strike: f64, sigma: f64, tau_years: f64) -> Result<f64> {
    check_inputs(spot, strike, sigma, tau_years)?;
    Ok(match d1_d2(spot, strike, sigma, tau_years) {
        None => (strike - spot).max(0.0),
        Some((d1, d2)) => (strike * norm_cdf(-d2) - spot * norm_cdf(-d1)).max(0.0),
    })
}

/// Call and put at one strike.
pub fn option_quote(spot: f64, strike: f64, sigma: f64, tau_years: f64) -> Result<OptionQuote> {
    Ok(OptionQuote {
        call: bs_call(spot, strike, sigma, tau_years)?,
        put: bs_put(spot, strike, sigma, tau_years)?,
        spot,
        strike,
        tau_years,
    })
}

/// Maximum payable borrowing rate `X / (K - X)`.
pub fn implied_rate_eq(x: f64, strike: f64) -> Result<f64> {
    ensure_non_negative("x", x)?;
    ensure_non_negative("strike", strike)?;
    if x >= strike {
        return Err(Error::Domain(format!(
            "put premium {x} must be below the strike {strike} for a finite rate"
        )));
    }
    Ok(x / (strike - x))
}

/// Rate convention of the published term tables, `X / K`.
pub fn implied_rate_table(x: f64, strike: f64) -> Result<f64> {
    ensure_non_negative("x", x)?;
    ensure_positive("strike", strike)?;
    Ok(x / strike)
}

pub fn implied_ltv(strike: f64, spot: f64) -> Result<f64> {
    ensure_non_negative("strike", strike)?;
    ensure_positive("spot", spot)?;
    Ok(strike / spot)
}
