//! Zero-liquidation loans priced by a constant-product AMM.
//!
//! A borrower swaps collateral for cash plus a call on that collateral; the
//! pool's inventories set the strike and an oblivious put premium sets the
//! cash discount. The crate covers quoting and execution ([`engine`]), the
//! option kernel ([`pricing`]), arbitrage against an outside option market
//! ([`arbitrage`]), payoff diagrams ([`payoffs`]) and historical simulation
//! ([`backtest`]).

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arbitrage;
pub mod backtest;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod payoffs;
pub mod pricing;
pub mod types;

pub use error::{Error, Result};
pub use types::{MarketParams, OptionQuote, PoolState, Position, PricePoint, PriceSeries, Quote, Side};
