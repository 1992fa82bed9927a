//! Arbitrage between the AMM and an outside option market.
//!
//! At the pool's marginal strike `K = k / q_c^2`, parity says the fair put
//! premium is `C_K - S + K`. Borrowers profit when that exceeds the ask-side
//! oblivious put, lenders when it falls short of the bid-side one. Trading
//! moves `q_c` and therefore `K` until the inequality closes.

use serde::{Deserialize, Serialize};

use crate::engine::{borrow_amount, check_no_shortfall, lend_amount, margin_impact};
use crate::error::{ensure_non_negative, Error, Result};
use crate::pricing::{bs_put, oblivious_put_price};
use crate::types::{MarketParams, PoolState, Side};

const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 200;
/// Headroom kept below the no-shortfall boundary, relative to initial liquidity.
const SHORTFALL_HEADROOM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbSignal {
    pub active: bool,
    /// Positive exactly when the signal is active.
    pub edge: f64,
    pub marginal_strike: f64,
    /// `C_K - S + K`, the parity-implied put premium.
    pub time_value: f64,
    /// Spread-adjusted oblivious put the time value is compared against.
    pub threshold: f64,
}

fn signal_for(q_c: f64, k: f64, params: &MarketParams, spot: f64, tau: f64, side: Side) -> Result<ArbSignal> {
    let strike = k / (q_c * q_c);
    // Zero-rate parity makes `C - S + K` the put itself. Pricing the put
    // directly avoids the cancellation in `C - S + K`, which leaves rounding
    // noise where the edge should be exactly zero.
    let time_value = bs_put(spot, strike, params.sigma, tau)?;
    let x = oblivious_put_price(spot, params, tau)?;
    let (threshold, edge) = match side {
        Side::Borrow => {
            let t = params.ask_adjusted(x);
            (t, time_value - t)
        }
        Side::Lend => {
            let t = params.bid_adjusted(x);
            (t, t - time_value)
        }
    };
    Ok(ArbSignal {
        active: edge > 0.0,
        edge,
        marginal_strike: strike,
        time_value,
        threshold,
    })
}

/// `C_K - S + K > X (1 + s_ask)` at the marginal strike.
pub fn borrower_arb_signal(pool: &PoolState, params: &MarketParams, spot: f64, tau: f64) -> Result<ArbSignal> {
    signal_for(pool.q_c, pool.k, params, spot, tau, Side::Borrow)
}

/// `C_K - S + K < X (1 - s_bid)` at the marginal strike.
pub fn lender_arb_signal(pool: &PoolState, params: &MarketParams, spot: f64, tau: f64) -> Result<ArbSignal> {
    signal_for(pool.q_c, pool.k, params, spot, tau, Side::Lend)
}

pub fn arb_signal(pool: &PoolState, params: &MarketParams, spot: f64, tau: f64, side: Side) -> Result<ArbSignal> {
    signal_for(pool.q_c, pool.k, params, spot, tau, side)
}

/// Size of the trade that closes an arbitrage signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumTrade {
    pub side: Side,
    pub delta_q_c: f64,
    /// The size was cut by liquidity or the no-shortfall condition before the
    /// edge reached zero.
    pub constrained: bool,
    /// Signal edge at the post-trade marginal strike.
    pub edge_after: f64,
}

struct Sizer<'a> {
    pool: &'a PoolState,
    params: &'a MarketParams,
    spot: f64,
    tau: f64,
    side: Side,
    x_eff: f64,
    margin: f64,
}

impl Sizer<'_> {
    fn post_trade_q_c(&self, d: f64) -> f64 {
        match self.side {
            Side::Borrow => self.pool.q_c + d,
            Side::Lend => self.pool.q_c - d,
        }
    }

    fn edge(&self, d: f64) -> Result<f64> {
        Ok(signal_for(
            self.post_trade_q_c(d),
            self.pool.k,
            self.params,
            self.spot,
            self.tau,
            self.side,
        )?
        .edge)
    }

    fn repayment(&self, d: f64) -> f64 {
        match self.side {
            Side::Borrow => borrow_amount(self.pool, d),
            Side::Lend => lend_amount(self.pool, d),
        }
    }

    fn cash_positive(&self, d: f64) -> bool {
        self.repayment(d) - d * self.x_eff > 0.0
    }

    fn solvent(&self, d: f64) -> bool {
        let impact = margin_impact(self.side, d, self.repayment(d), self.x_eff);
        self.margin - impact > SHORTFALL_HEADROOM * self.pool.q_b_initial
    }

    fn feasible(&self, d: f64) -> bool {
        if !(d > 0.0) {
            return false;
        }
        match self.side {
            Side::Borrow => self.repayment(d) < self.pool.q_b && self.cash_positive(d) && self.solvent(d),
            Side::Lend => d < self.pool.q_c && self.cash_positive(d) && self.solvent(d),
        }
    }

    /// Largest `d` in `(0, hi]` satisfying `pred`, given `pred` holds on an
    /// initial segment of the interval.
    fn boundary(&self, hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-12 * self.pool.q_c {
                break;
            }
            if pred(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Finds the trade size that drives the post-trade marginal edge to zero.
///
/// The edge falls monotonically with size on both sides: borrowing lowers
/// the marginal strike and hence the parity put, lending raises it. The
/// result sits on the non-positive side of the root, so executing it leaves
/// the signal inactive. If liquidity or the no-shortfall condition binds
/// first, the largest feasible size is returned with `constrained` set.
pub fn find_equilibrium_trade(
    pool: &PoolState,
    params: &MarketParams,
    spot: f64,
    tau: f64,
    side: Side,
) -> Result<EquilibriumTrade> {
    ensure_non_negative("tau", tau)?;
    let start = arb_signal(pool, params, spot, tau, side)?;
    if !start.active {
        return Err(Error::SignalInactive);
    }
    let x = oblivious_put_price(spot, params, tau)?;
    let sizer = Sizer {
        pool,
        params,
        spot,
        tau,
        side,
        x_eff: match side {
            Side::Borrow => params.ask_adjusted(x),
            Side::Lend => params.bid_adjusted(x),
        },
        margin: check_no_shortfall(pool).margin,
    };

    // Bracket the root: edge(lo) > 0 >= edge(hi).
    let mut lo = 0.0_f64;
    let mut hi = match side {
        Side::Borrow => {
            let mut hi = pool.q_c;
            let mut doublings = 0;
            while sizer.edge(hi)? > 0.0 {
                lo = hi;
                hi *= 2.0;
                doublings += 1;
                if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
                    return Err(Error::NoFeasibleTrade("borrow edge never closes".into()));
                }
            }
            hi
        }
        // The lend edge tends to -inf as the size approaches q_c.
        Side::Lend => pool.q_c,
    };

    let tol_d = 1e-9 * pool.q_c;
    let mut hi_edge = None;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol_d || mid <= lo || mid >= hi {
            break;
        }
        let e = sizer.edge(mid)?;
        if e > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            hi_edge = Some(e);
        }
    }
    let hi_edge = match hi_edge {
        Some(e) => e,
        None => sizer.edge(hi)?,
    };

    if sizer.feasible(hi) {
        return Ok(EquilibriumTrade {
            side,
            delta_q_c: hi,
            constrained: false,
            edge_after: hi_edge,
        });
    }

    let capped = match side {
        Side::Borrow => sizer.boundary(hi, |d| sizer.feasible(d)),
        Side::Lend => {
            let d = sizer.boundary(hi, |d| d < pool.q_c && sizer.solvent(d));
            if !sizer.cash_positive(d) {
                return Err(Error::NoFeasibleTrade(
                    "lender cash leg is not positive at any solvent size".into(),
                ));
            }
            d
        }
    };
    if !sizer.feasible(capped) {
        return Err(Error::NoFeasibleTrade(format!("{side} capacity exhausted")));
    }
    Ok(EquilibriumTrade {
        side,
        delta_q_c: capped,
        constrained: true,
        edge_after: sizer.edge(capped)?,
    })
}

/// Profit of the flash-loan borrower trade: pledge freshly bought collateral,
/// take the upfront cash, sell the embedded call.
pub fn flash_borrow_arb_profit(spot: f64, upfront_cash: f64, market_call_price: f64) -> Result<f64> {
    ensure_non_negative("spot", spot)?;
    ensure_non_negative("upfront_cash", upfront_cash)?;
    ensure_non_negative("market_call_price", market_call_price)?;
    Ok(upfront_cash + market_call_price - spot)
}

/// Profit of the hedged lender trade: borrow elsewhere, lend to the AMM, buy
/// a put at the AMM strike.
pub fn lender_arb_profit(borrowed: f64, lent: f64, put_premium: f64) -> Result<f64> {
    ensure_non_negative("borrowed", borrowed)?;
    ensure_non_negative("lent", lent)?;
    ensure_non_negative("put_premium", put_premium)?;
    Ok(borrowed - lent - put_premium)
}
