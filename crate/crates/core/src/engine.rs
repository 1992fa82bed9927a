//! The AMM state machine.
//!
//! A borrower pledging `dq_c` collateral moves the pool along the curve
//! `(q_c + dq_c)(q_b - dq_b) = k`. The repayment amount `dq_b` fixes the
//! strike `K = dq_b / dq_c`; the borrower receives `dq_b - dq_c * X_ask` in
//! cash now. Lending runs the curve the other way: the lender pays
//! `dq_b - dq_c * X_bid` and is owed `min(S_T, K)` per unit at expiry.
//!
//! Quotes are pure. [`execute`] revalidates a quote against the pool revision
//! and the no-shortfall condition before mutating anything.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::pricing::{implied_ltv, implied_rate_eq, implied_rate_table, oblivious_put_price};
use crate::types::{MarketParams, PoolState, Position, Quote, Side};

/// Relative tolerance used when re-deriving a quote at execution time.
const QUOTE_MATCH_RTOL: f64 = 1e-9;

/// Borrow-currency amount released when `dq_c` collateral enters the pool.
///
/// Equal to `q_b - k / (q_c + dq_c)` on the curve; the factored form avoids
/// cancellation for small trades.
pub fn borrow_amount(pool: &PoolState, dq_c: f64) -> f64 {
    pool.k * dq_c / (pool.q_c * (pool.q_c + dq_c))
}

/// Borrow-currency amount absorbed when `dq_c` collateral leaves the pool,
/// `k / (q_c - dq_c) - q_b` on the curve.
pub fn lend_amount(pool: &PoolState, dq_c: f64) -> f64 {
    pool.k * dq_c / (pool.q_c * (pool.q_c - dq_c))
}

fn build_quote(pool: &PoolState, side: Side, dq_c: f64, dq_b: f64, x_eff: f64, spot: f64) -> Result<Quote> {
    let strike = dq_b / dq_c;
    let cash_leg = dq_b - dq_c * x_eff;
    if !(cash_leg > 0.0) {
        return Err(Error::UneconomicTrade { cash_leg });
    }
    Ok(Quote {
        side,
        delta_q_c: dq_c,
        delta_q_b: dq_b,
        strike,
        cash_leg,
        oblivious_put: x_eff,
        implied_ltv: implied_ltv(strike, spot)?,
        implied_rate_eq: implied_rate_eq(x_eff, strike)?,
        implied_rate_table: implied_rate_table(x_eff, strike)?,
        pool_revision: pool.revision,
    })
}

/// Prices a loan against `delta_q_c` units of pledged collateral.
pub fn quote_borrow(pool: &PoolState, params: &MarketParams, delta_q_c: f64, spot: f64) -> Result<Quote> {
    ensure_positive("delta_q_c", delta_q_c)?;
    ensure_positive("spot", spot)?;
    let dq_b = borrow_amount(pool, delta_q_c);
    if !(dq_b < pool.q_b) {
        return Err(Error::InsufficientLiquidity {
            requested: dq_b,
            available: pool.q_b,
        });
    }
    let x = oblivious_put_price(spot, params, pool.remaining_years(params))?;
    build_quote(pool, Side::Borrow, delta_q_c, dq_b, params.ask_adjusted(x), spot)
}

/// Prices a deposit that takes `delta_q_c` collateral units off the curve.
pub fn quote_lend(pool: &PoolState, params: &MarketParams, delta_q_c: f64, spot: f64) -> Result<Quote> {
    ensure_positive("delta_q_c", delta_q_c)?;
    ensure_positive("spot", spot)?;
    if delta_q_c >= pool.q_c {
        return Err(Error::DrainsCollateral {
            requested: delta_q_c,
            available: pool.q_c,
        });
    }
    let dq_b = lend_amount(pool, delta_q_c);
    let x = oblivious_put_price(spot, params, pool.remaining_years(params))?;
    build_quote(pool, Side::Lend, delta_q_c, dq_b, params.bid_adjusted(x), spot)
}

/// Finds the lend size whose cash leg equals `cash_paid`.
///
/// The lender's cash leg is convex in the trade size, zero at zero and
/// unbounded as the size approaches `q_c`, so `cash_leg - cash_paid` has a
/// single root on `(0, q_c)`.
pub fn solve_lend_for_cash(pool: &PoolState, params: &MarketParams, cash_paid: f64, spot: f64) -> Result<Quote> {
    ensure_positive("cash_paid", cash_paid)?;
    ensure_positive("spot", spot)?;
    let x_bid = params.bid_adjusted(oblivious_put_price(spot, params, pool.remaining_years(params))?);
    let excess = |d: f64| lend_amount(pool, d) - d * x_bid - cash_paid;

    let (mut lo, mut hi) = (0.0_f64, pool.q_c);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = excess(mid);
        if f.abs() <= 1e-6 {
            return quote_lend(pool, params, mid, spot);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The bracket collapsed to adjacent floats; accept the closer end if it
    // is within floating-point resolution of the target.
    let best = if excess(lo).abs() <= excess(hi).abs() || hi >= pool.q_c {
        lo
    } else {
        hi
    };
    let err = excess(best).abs();
    if best > 0.0 && err <= 1e-12 * cash_paid.max(1.0) {
        return quote_lend(pool, params, best, spot);
    }
    Err(Error::NoSolution(format!(
        "cash {cash_paid} is not attainable (closest lend size {best} misses by {err})"
    )))
}

/// Outcome of the solvency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortfallCheck {
    pub holds: bool,
    /// Worst-case available liquidity minus worst-case lender payout.
    pub margin: f64,
}

/// The pool must be able to buy back every lender's collateral even if no
/// borrower ever repays:
/// `sum_L dq_c * X_bid < q_b_initial - sum_B dq_b`.
pub fn check_no_shortfall(pool: &PoolState) -> ShortfallCheck {
    let owed: f64 = pool.lend_positions.iter().map(|p| p.delta_q_c * p.x_effective).sum();
    let available = pool.q_b_initial - pool.borrow_positions.iter().map(|p| p.delta_q_b).sum::<f64>();
    let margin = available - owed;
    ShortfallCheck {
        holds: margin > 0.0,
        margin,
    }
}

/// Amount by which opening a position reduces the no-shortfall margin.
pub fn margin_impact(side: Side, delta_q_c: f64, delta_q_b: f64, x_effective: f64) -> f64 {
    match side {
        Side::Borrow => delta_q_b,
        Side::Lend => delta_q_c * x_effective,
    }
}

fn close_rel(a: f64, b: f64) -> bool {
    (a - b).abs() <= QUOTE_MATCH_RTOL * a.abs().max(b.abs()).max(1e-300)
}

/// Applies a quote to the pool and books the position.
pub fn execute(pool: &mut PoolState, quote: &Quote) -> Result<Position> {
    if quote.pool_revision != pool.revision {
        return Err(Error::StaleQuote {
            quoted: quote.pool_revision,
            current: pool.revision,
        });
    }
    ensure_positive("delta_q_c", quote.delta_q_c)?;
    if !(quote.cash_leg > 0.0) {
        return Err(Error::UneconomicTrade {
            cash_leg: quote.cash_leg,
        });
    }

    let dq_c = quote.delta_q_c;
    let (expected_dq_b, new_q_c) = match quote.side {
        Side::Borrow => (borrow_amount(pool, dq_c), pool.q_c + dq_c),
        Side::Lend => {
            if dq_c >= pool.q_c {
                return Err(Error::DrainsCollateral {
                    requested: dq_c,
                    available: pool.q_c,
                });
            }
            (lend_amount(pool, dq_c), pool.q_c - dq_c)
        }
    };
    if !close_rel(expected_dq_b, quote.delta_q_b) {
        return Err(Error::QuoteMismatch(format!(
            "repayment {} differs from curve amount {expected_dq_b}",
            quote.delta_q_b
        )));
    }
    if !close_rel(quote.strike * dq_c, quote.delta_q_b)
        || !close_rel(quote.delta_q_b - dq_c * quote.oblivious_put, quote.cash_leg)
    {
        return Err(Error::QuoteMismatch(
            "strike or cash leg inconsistent with quantities".into(),
        ));
    }

    let position = Position {
        opened_at: pool.now_years,
        ..Position::from(quote)
    };
    let book = match quote.side {
        Side::Borrow => &mut pool.borrow_positions,
        Side::Lend => &mut pool.lend_positions,
    };
    book.push(position.clone());
    let check = check_no_shortfall(pool);
    if !check.holds {
        match quote.side {
            Side::Borrow => pool.borrow_positions.pop(),
            Side::Lend => pool.lend_positions.pop(),
        };
        return Err(Error::Shortfall { margin: check.margin });
    }

    match quote.side {
        Side::Borrow => pool.q_b -= quote.delta_q_b,
        Side::Lend => pool.q_b += quote.delta_q_b,
    }
    pool.q_c = new_q_c;
    pool.revision += 1;
    Ok(position)
}

/// Cash and collateral moving for one position at expiry. Holder and pool
/// legs are mirror images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementFlow {
    pub side: Side,
    pub index: usize,
    pub strike: f64,
    /// Borrower repaid / pool paid the lender in cash.
    pub settled_in_cash: bool,
    pub holder_cash: f64,
    pub holder_collateral: f64,
    pub pool_cash: f64,
    pub pool_collateral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub spot_at_expiry: f64,
    pub flows: Vec<SettlementFlow>,
    pub pool_cash_change: f64,
    pub pool_collateral_change: f64,
    pub cash_before: f64,
    pub collateral_before: f64,
    /// Pool holdings after all positions are settled.
    pub final_cash: f64,
    /// Negative when repaying borrowers and collateral-settled lenders
    /// together claim more units than the pool holds. The no-shortfall
    /// condition only bounds cash, so the deficit has to be bought at the
    /// expiry spot.
    pub final_collateral: f64,
    pub final_q_c: f64,
    pub final_q_b: f64,
}

impl SettlementReport {
    /// Net value delivered to position holders, marked at the expiry spot.
    pub fn holder_value(&self) -> f64 {
        self.flows
            .iter()
            .map(|f| f.holder_cash + f.holder_collateral * self.spot_at_expiry)
            .sum()
    }

    pub fn pool_value_change(&self) -> f64 {
        self.pool_cash_change + self.pool_collateral_change * self.spot_at_expiry
    }
}

/// Settles every open position at the expiry price.
///
/// Borrowers repay `K` per unit and reclaim collateral only when
/// `S_T > K`; lenders are paid `K` per unit in cash when `S_T > K` and
/// receive the collateral otherwise. Ties go to collateral delivery.
pub fn settle_expiry(pool: &PoolState, params: &MarketParams, spot_at_expiry: f64) -> Result<SettlementReport> {
    ensure_positive("spot_at_expiry", spot_at_expiry)?;
    if pool.now_years < params.term_years {
        return Err(Error::NotExpired {
            now_years: pool.now_years,
            term_years: params.term_years,
        });
    }

    let mut flows = Vec::with_capacity(pool.borrow_positions.len() + pool.lend_positions.len());
    for (index, p) in pool.borrow_positions.iter().enumerate() {
        let repay = spot_at_expiry > p.strike;
        let (cash, coll) = if repay { (p.delta_q_b, -p.delta_q_c) } else { (0.0, 0.0) };
        flows.push(SettlementFlow {
            side: Side::Borrow,
            index,
            strike: p.strike,
            settled_in_cash: repay,
            holder_cash: -cash,
            holder_collateral: -coll,
            pool_cash: cash,
            pool_collateral: coll,
        });
    }
    for (index, p) in pool.lend_positions.iter().enumerate() {
        let pay_cash = spot_at_expiry > p.strike;
        let (cash, coll) = if pay_cash {
            (-p.delta_q_b, 0.0)
        } else {
            (0.0, -p.delta_q_c)
        };
        flows.push(SettlementFlow {
            side: Side::Lend,
            index,
            strike: p.strike,
            settled_in_cash: pay_cash,
            holder_cash: -cash,
            holder_collateral: -coll,
            pool_cash: cash,
            pool_collateral: coll,
        });
    }

    let pool_cash_change: f64 = flows.iter().map(|f| f.pool_cash).sum();
    let pool_collateral_change: f64 = flows.iter().map(|f| f.pool_collateral).sum();
    let cash_before = pool.cash_balance();
    let collateral_before = pool.collateral_balance();
    Ok(SettlementReport {
        spot_at_expiry,
        flows,
        pool_cash_change,
        pool_collateral_change,
        cash_before,
        collateral_before,
        final_cash: cash_before + pool_cash_change,
        final_collateral: collateral_before + pool_collateral_change,
        final_q_c: pool.q_c,
        final_q_b: pool.q_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (PoolState, MarketParams) {
        (
            PoolState::new(30.0, 100_000.0).unwrap(),
            MarketParams::new(0.5, 1.0, 0.0, 0.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn borrow_reference_rows() {
        let (pool, params) = fixture();
        let q = quote_borrow(&pool, &params, 1.0, 4000.0).unwrap();
        assert!((q.cash_leg - 2425.806).abs() < 1e-3);
        assert!((q.delta_q_b - 3225.806).abs() < 1e-3);
        assert_eq!(q.strike * q.delta_q_c, q.delta_q_b);
        let q = quote_borrow(&pool, &params, 20.0, 4000.0).unwrap();
        assert!((q.cash_leg - 24_000.0).abs() < 1e-6);
        assert!((q.strike - 2000.0).abs() < 1e-9);
        assert!((q.implied_ltv - 0.5).abs() < 1e-12);
        assert!((q.implied_rate_table - 0.4).abs() < 1e-12);
    }

    #[test]
    fn marginal_strike_limit() {
        let (pool, params) = fixture();
        let q = quote_borrow(&pool, &params, 1e-9, 4000.0).unwrap();
        assert!((q.strike - 3e6 / 900.0).abs() < 1e-4, "{}", q.strike);
        assert!((pool.marginal_strike() - 3333.333333).abs() < 1e-6);
    }

    #[test]
    fn deep_borrow_is_uneconomic() {
        let (pool, params) = fixture();
        // average strike 3e6/(30*(30+d)) falls below X = 800 for d > 95
        match quote_borrow(&pool, &params, 100.0, 4000.0) {
            Err(Error::UneconomicTrade { cash_leg }) => assert!(cash_leg <= 0.0),
            other => panic!("{other:?}"),
        }
        assert!(quote_borrow(&pool, &params, 0.0, 4000.0).is_err());
    }

    #[test]
    fn lend_bounds() {
        let (pool, params) = fixture();
        assert!(matches!(
            quote_lend(&pool, &params, 30.0, 4000.0),
            Err(Error::DrainsCollateral { .. })
        ));
        let q = quote_lend(&pool, &params, 3.382, 4000.0).unwrap();
        assert!((q.delta_q_b - 12_706.0).abs() < 1.0);
        assert!((q.cash_leg - 10_000.0).abs() < 1.0);
    }

    #[test]
    fn solve_lend_tiny_cash_gives_tiny_size() {
        let (pool, params) = fixture();
        let q = solve_lend_for_cash(&pool, &params, 1e-3, 4000.0).unwrap();
        assert!(q.delta_q_c > 0.0 && q.delta_q_c < 1e-6);
        assert!((q.cash_leg - 1e-3).abs() <= 1e-6);
        assert!(solve_lend_for_cash(&pool, &params, 0.0, 4000.0).is_err());
        assert!(solve_lend_for_cash(&pool, &params, f64::INFINITY, 4000.0).is_err());
    }

    #[test]
    fn execute_updates_pool_and_rejects_stale() {
        let (mut pool, params) = fixture();
        let q = quote_borrow(&pool, &params, 1.0, 4000.0).unwrap();
        let stale = q.clone();
        execute(&mut pool, &q).unwrap();
        assert_eq!(pool.q_c, 31.0);
        assert!((pool.q_b - 3e6 / 31.0).abs() < 1e-9);
        assert!((pool.q_b - 96_774.193_548).abs() < 1e-3);
        assert!(((pool.q_c * pool.q_b - 3e6) / 3e6).abs() < 1e-12);
        assert!(matches!(execute(&mut pool, &stale), Err(Error::StaleQuote { .. })));
    }

    #[test]
    fn execute_rejects_zero_and_tampered_quotes() {
        let (mut pool, params) = fixture();
        let mut q = quote_borrow(&pool, &params, 1.0, 4000.0).unwrap();
        q.delta_q_c = 0.0;
        assert!(execute(&mut pool, &q).is_err());
        let mut q = quote_borrow(&pool, &params, 1.0, 4000.0).unwrap();
        q.delta_q_b *= 1.01;
        assert!(matches!(execute(&mut pool, &q), Err(Error::QuoteMismatch(_))));
        assert_eq!(pool.revision, 0);
        assert!(pool.borrow_positions.is_empty());
    }

    #[test]
    fn shortfall_margin() {
        let (mut pool, params) = fixture();
        let c = check_no_shortfall(&pool);
        assert!(c.holds);
        assert_eq!(c.margin, 100_000.0);
        let q = quote_borrow(&pool, &params, 1.0, 4000.0).unwrap();
        execute(&mut pool, &q).unwrap();
        let c = check_no_shortfall(&pool);
        assert!((c.margin - (100_000.0 - q.delta_q_b)).abs() < 1e-9);
    }

    #[test]
    fn settlement_branches() {
        let params = MarketParams::new(0.2, 1.0, 0.0, 0.0, 1.0).unwrap();
        let mut pool = PoolState::new(30.0, 100_000.0).unwrap();
        pool.borrow_positions.push(Position {
            side: Side::Borrow,
            delta_q_c: 1.0,
            delta_q_b: 2000.0,
            strike: 2000.0,
            cash_leg: 1850.0,
            x_effective: 150.0,
            opened_at: 0.0,
        });
        assert!(matches!(
            settle_expiry(&pool, &params, 2500.0),
            Err(Error::NotExpired { .. })
        ));
        pool.now_years = 1.0;

        let up = settle_expiry(&pool, &params, 2500.0).unwrap();
        assert!(up.flows[0].settled_in_cash);
        assert_eq!(up.flows[0].holder_cash, -2000.0);
        assert_eq!(up.flows[0].holder_collateral, 1.0);

        let down = settle_expiry(&pool, &params, 1500.0).unwrap();
        assert!(!down.flows[0].settled_in_cash);
        assert_eq!(down.pool_collateral_change, 0.0);

        let tie = settle_expiry(&pool, &params, 2000.0).unwrap();
        assert!(!tie.flows[0].settled_in_cash);
    }
}
