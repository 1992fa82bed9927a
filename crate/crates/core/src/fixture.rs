//! The bundled reference market (30 collateral units against 100,000 of
//! borrow currency, spot 4,000, alpha 0.5 (an oblivious put of 800), 100% volatility, one year to
//! expiry, no spreads) and the term tables it produces.

use serde::{Deserialize, Serialize};

use crate::engine::{quote_borrow, solve_lend_for_cash};
use crate::error::{Error, Result};
use crate::types::{MarketParams, PoolState, Quote};

pub const REFERENCE_MARKET_JSON: &str = include_str!("../fixtures/reference_market.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMarket {
    pub params: MarketParams,
    pub q_c: f64,
    pub q_b: f64,
    pub spot: f64,
    /// Collateral sizes for the borrower table.
    pub borrow_sizes: Vec<f64>,
    /// Cash amounts for the lender table.
    pub lend_cash: Vec<f64>,
}

/// One table row; `quote` is `None` when the row could not be priced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub input: f64,
    pub quote: Option<Quote>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTables {
    pub borrow: Vec<TableRow>,
    pub lend: Vec<TableRow>,
}

impl ReferenceMarket {
    pub fn bundled() -> Self {
        Self::from_json(REFERENCE_MARKET_JSON).expect("bundled fixture is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::InvalidConfig("fixture is empty".into()));
        }
        let market: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        market.params.validate()?;
        market.pool()?;
        if market.borrow_sizes.is_empty() && market.lend_cash.is_empty() {
            return Err(Error::InvalidConfig("fixture lists no table rows".into()));
        }
        Ok(market)
    }

    pub fn pool(&self) -> Result<PoolState> {
        PoolState::new(self.q_c, self.q_b)
    }

    pub fn tables(&self) -> Result<TermTables> {
        let pool = self.pool()?;
        let row = |input: f64, r: Result<Quote>| match r {
            Ok(q) => TableRow {
                input,
                quote: Some(q),
                error: None,
            },
            Err(e) => TableRow {
                input,
                quote: None,
                error: Some(e.to_string()),
            },
        };
        Ok(TermTables {
            borrow: self
                .borrow_sizes
                .iter()
                .map(|&d| row(d, quote_borrow(&pool, &self.params, d, self.spot)))
                .collect(),
            lend: self
                .lend_cash
                .iter()
                .map(|&c| row(c, solve_lend_for_cash(&pool, &self.params, c, self.spot)))
                .collect(),
        })
    }
}
