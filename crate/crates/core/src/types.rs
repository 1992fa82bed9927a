//! Domain values shared by every module: market configuration, pool state,
//! quotes, open positions and price observations.
//!
//! Units: quantities of the collateral currency are plain `f64` counts,
//! amounts of the borrow currency are `f64` currency units, prices are borrow
//! currency per collateral unit, and time is measured in year fractions
//! (days / 365).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds in one year under the days/365 convention.
pub const SECONDS_PER_YEAR: f64 = 365.0 * 86_400.0;

/// Convert a day count to a year fraction.
pub fn days_to_years(days: f64) -> f64 {
    days / 365.0
}

/// Immutable configuration of one loan market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Scaling factor applied to the at-the-money put approximation.
    pub alpha: f64,
    /// Annualized volatility, 1.0 = 100%.
    pub sigma: f64,
    pub s_bid: f64,
    pub s_ask: f64,
    /// Time from inception to expiry.
    pub term_years: f64,
    #[serde(default = "default_collateral_symbol")]
    pub collateral_symbol: String,
    #[serde(default = "default_borrow_symbol")]
    pub borrow_symbol: String,
}

fn default_collateral_symbol() -> String {
    "ETH".to_string()
}

fn default_borrow_symbol() -> String {
    "USDC".to_string()
}

impl MarketParams {
    pub fn new(alpha: f64, sigma: f64, s_bid: f64, s_ask: f64, term_years: f64) -> Result<Self> {
        let params = Self {
            alpha,
            sigma,
            s_bid,
            s_ask,
            term_years,
            collateral_symbol: default_collateral_symbol(),
            borrow_symbol: default_borrow_symbol(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_symbols(mut self, collateral: impl Into<String>, borrow: impl Into<String>) -> Self {
        self.collateral_symbol = collateral.into();
        self.borrow_symbol = borrow.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.s_bid.is_finite() && self.s_bid >= 0.0) {
            return bad(format!("s_bid must be >= 0, got {}", self.s_bid));
        }
        if !(self.s_ask.is_finite() && self.s_ask >= 0.0) {
            return bad(format!("s_ask must be >= 0, got {}", self.s_ask));
        }
        if !(self.term_years.is_finite() && self.term_years > 0.0) {
            return bad(format!("term_years must be > 0, got {}", self.term_years));
        }
        Ok(())
    }

    /// Per-unit put premium charged to borrowers.
    pub fn ask_adjusted(&self, oblivious_put: f64) -> f64 {
        oblivious_put * (1.0 + self.s_ask)
    }

    /// Per-unit put premium credited to lenders.
    pub fn bid_adjusted(&self, oblivious_put: f64) -> f64 {
        oblivious_put * (1.0 - self.s_bid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Borrow,
    Lend,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Borrow => f.write_str("borrow"),
            Side::Lend => f.write_str("lend"),
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "borrow" => Ok(Side::Borrow),
            "lend" => Ok(Side::Lend),
            other => Err(Error::Domain(format!("unknown side {other:?}"))),
        }
    }
}

/// One priced trade against a pool snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub side: Side,
    pub delta_q_c: f64,
    /// Repayment amount; equals `strike * delta_q_c`.
    pub delta_q_b: f64,
    pub strike: f64,
    /// Cash received by a borrower, or paid by a lender, at open.
    pub cash_leg: f64,
    /// Spread-adjusted oblivious put per collateral unit.
    pub oblivious_put: f64,
    pub implied_ltv: f64,
    /// `X / (K - X)`.
    pub implied_rate_eq: f64,
    /// `X / K`, the convention used by the published term tables.
    pub implied_rate_table: f64,
    /// Pool revision the quote was priced against.
    #[serde(default)]
    pub pool_revision: u64,
}

/// An open borrow or lend leg, settled only at expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub side: Side,
    pub delta_q_c: f64,
    pub delta_q_b: f64,
    pub strike: f64,
    pub cash_leg: f64,
    pub x_effective: f64,
    pub opened_at: f64,
}

impl From<&Quote> for Position {
    fn from(q: &Quote) -> Self {
        Position {
            side: q.side,
            delta_q_c: q.delta_q_c,
            delta_q_b: q.delta_q_b,
            strike: q.strike,
            cash_leg: q.cash_leg,
            x_effective: q.oblivious_put,
            opened_at: 0.0,
        }
    }
}

/// AMM inventories plus the book of open positions.
///
/// `q_c`/`q_b` are the pricing inventories on the constant-product curve.
/// The assets actually held by the pool differ from them (see
/// [`PoolState::cash_balance`] and [`PoolState::collateral_balance`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub q_c: f64,
    pub q_b: f64,
    pub k: f64,
    pub q_b_initial: f64,
    #[serde(default)]
    pub q_c_initial: f64,
    pub now_years: f64,
    #[serde(default)]
    pub borrow_positions: Vec<Position>,
    #[serde(default)]
    pub lend_positions: Vec<Position>,
    /// Incremented on every executed trade.
    #[serde(default)]
    pub revision: u64,
}

impl PoolState {
    pub fn new(q_c: f64, q_b: f64) -> Result<Self> {
        if !(q_c.is_finite() && q_c > 0.0) {
            return Err(Error::InvalidPool(format!("q_c must be > 0, got {q_c}")));
        }
        if !(q_b.is_finite() && q_b > 0.0) {
            return Err(Error::InvalidPool(format!("q_b must be > 0, got {q_b}")));
        }
        Ok(Self {
            q_c,
            q_b,
            k: q_c * q_b,
            q_b_initial: q_b,
            q_c_initial: q_c,
            now_years: 0.0,
            borrow_positions: Vec::new(),
            lend_positions: Vec::new(),
            revision: 0,
        })
    }

    /// Checks a deserialized snapshot for internal consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPool(msg));
        for (name, v) in [
            ("q_c", self.q_c),
            ("q_b", self.q_b),
            ("k", self.k),
            ("q_b_initial", self.q_b_initial),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !self.now_years.is_finite() || self.now_years < 0.0 {
            return bad(format!("now_years must be >= 0, got {}", self.now_years));
        }
        let product = self.q_c * self.q_b;
        if ((product - self.k) / self.k).abs() > 1e-9 {
            return bad(format!("q_c * q_b = {product} does not match k = {}", self.k));
        }
        for (side, list) in [
            (Side::Borrow, &self.borrow_positions),
            (Side::Lend, &self.lend_positions),
        ] {
            if list.iter().any(|p| p.side != side) {
                return bad(format!("{side} position list holds a position of the other side"));
            }
        }
        Ok(())
    }

    pub fn remaining_years(&self, params: &MarketParams) -> f64 {
        (params.term_years - self.now_years).max(0.0)
    }

    /// Strike quoted for an infinitesimal trade, `k / q_c^2`.
    pub fn marginal_strike(&self) -> f64 {
        self.k / (self.q_c * self.q_c)
    }

    /// Collateral quantity the pool was bootstrapped with.
    pub fn initial_collateral(&self) -> f64 {
        if self.q_c_initial > 0.0 {
            self.q_c_initial
        } else {
            self.k / self.q_b_initial
        }
    }

    /// Borrow-currency cash actually held: initial liquidity minus cash paid
    /// to borrowers plus cash received from lenders.
    pub fn cash_balance(&self) -> f64 {
        let paid: f64 = self.borrow_positions.iter().map(|p| p.cash_leg).sum();
        let received: f64 = self.lend_positions.iter().map(|p| p.cash_leg).sum();
        self.q_b_initial - paid + received
    }

    /// Collateral actually held, including units pledged by borrowers and
    /// units earmarked for lenders.
    pub fn collateral_balance(&self) -> f64 {
        let pledged: f64 = self.borrow_positions.iter().map(|p| p.delta_q_c).sum();
        self.initial_collateral() + pledged
    }
}

/// Zero-rate vanilla option prices at a single strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub call: f64,
    pub put: f64,
    pub spot: f64,
    pub strike: f64,
    pub tau_years: f64,
}

impl OptionQuote {
    /// Deviation from `call - put = spot - strike`.
    pub fn parity_gap(&self) -> f64 {
        (self.call - self.put) - (self.spot - self.strike)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub price: f64,
}

/// Positive prices with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PricePoint>", into = "Vec<PricePoint>")]
pub struct PriceSeries(Vec<PricePoint>);

impl PriceSeries {
    pub fn new(points: Vec<PricePoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.price.is_finite() && p.price > 0.0)) {
            return Err(Error::Domain(format!(
                "price at t={} must be positive, got {}",
                p.timestamp, p.price
            )));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Domain(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(Self(points))
    }

    /// Builds a series from `(timestamp, price)` pairs in any order.
    pub fn from_unsorted(mut points: Vec<PricePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.timestamp);
        Self::new(points)
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&PricePoint> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&PricePoint> {
        self.0.last()
    }

    pub fn prices(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|p| p.price)
    }

    /// Price at `timestamp`, linearly interpolated between observations.
    /// Returns `None` outside the observed range.
    pub fn price_at(&self, timestamp: i64) -> Option<f64> {
        let idx = self.0.partition_point(|p| p.timestamp <= timestamp);
        if idx == 0 {
            return None;
        }
        let left = self.0[idx - 1];
        if left.timestamp == timestamp {
            return Some(left.price);
        }
        let right = self.0.get(idx)?;
        let w = (timestamp - left.timestamp) as f64 / (right.timestamp - left.timestamp) as f64;
        Some(left.price + w * (right.price - left.price))
    }
}

impl TryFrom<Vec<PricePoint>> for PriceSeries {
    type Error = Error;

    fn try_from(points: Vec<PricePoint>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PriceSeries> for Vec<PricePoint> {
    fn from(series: PriceSeries) -> Self {
        series.0
    }
}
