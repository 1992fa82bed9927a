//! Historical simulation of one loan market with arbitrage agents.
//!
//! At every sample the market is re-marked to the current spot and time to
//! expiry. If either arbitrage signal is active, the aggregate arbitrageur on
//! that side trades the equilibrium size against the pool. At expiry all
//! positions are settled and the pool's return is compared with simply
//! holding the bootstrap inventories.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::arbitrage::{arb_signal, find_equilibrium_trade};
use crate::engine::{execute, quote_borrow, quote_lend, settle_expiry, SettlementReport};
use crate::error::{Error, Result};
use crate::pricing::oblivious_put_price;
use crate::types::{days_to_years, MarketParams, PoolState, PricePoint, PriceSeries, Side, SECONDS_PER_YEAR};

pub const SECONDS_PER_DAY: i64 = 86_400;

fn default_sample_interval() -> u64 {
    SECONDS_PER_DAY as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// `term_years` is overridden by `term_days / 365`.
    pub params: MarketParams,
    pub initial_q_c: f64,
    pub initial_q_b: f64,
    pub price_file: PathBuf,
    pub start: DateTime<Utc>,
    pub term_days: u32,
    /// Seconds between samples.
    #[serde(default = "default_sample_interval")]
    pub sample_interval: u64,
}

impl BacktestConfig {
    /// Reads a JSON config; a relative `price_file` is resolved against the
    /// config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut config: BacktestConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if config.price_file.is_relative() {
            if let Some(dir) = path.parent() {
                config.price_file = dir.join(&config.price_file);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.term_days == 0 {
            return Err(Error::InvalidConfig("term_days must be > 0".into()));
        }
        if self.sample_interval == 0 {
            return Err(Error::InvalidConfig("sample_interval must be > 0".into()));
        }
        for (name, v) in [("initial_q_c", self.initial_q_c), ("initial_q_b", self.initial_q_b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Market parameters with the term taken from `term_days`.
    pub fn effective_params(&self) -> MarketParams {
        MarketParams {
            term_years: days_to_years(self.term_days as f64),
            ..self.params.clone()
        }
    }

    pub fn start_timestamp(&self) -> i64 {
        self.start.timestamp()
    }

    pub fn end_timestamp(&self) -> i64 {
        self.start_timestamp() + self.term_days as i64 * SECONDS_PER_DAY
    }
}

/// Parses a `timestamp,price` CSV with ISO-8601 UTC timestamps.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_prices(file)
}

pub fn parse_prices(reader: impl std::io::Read) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::PriceData {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "price" {
        return Err(Error::PriceData {
            line: 1,
            message: "expected header `timestamp,price`".into(),
        });
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::PriceData {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::PriceData { line, message };
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", record.len())));
        }
        let timestamp = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| bad(format!("timestamp {:?}: {e}", &record[0])))?
            .timestamp();
        let price: f64 = record[1]
            .parse()
            .map_err(|e| bad(format!("price {:?}: {e}", &record[1])))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(bad(format!("price must be positive, got {price}")));
        }
        points.push(PricePoint { timestamp, price });
    }
    points.sort_by_key(|p| p.timestamp);
    if let Some(w) = points.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(Error::PriceData {
            line: 0,
            message: format!("duplicate timestamp {}", w[0].timestamp),
        });
    }
    PriceSeries::new(points)
}

/// One row of the plot-ready time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    /// Seconds since the Unix epoch.
    pub t: i64,
    pub spot: f64,
    pub marginal_strike: f64,
    /// Ask-side oblivious put over the marginal strike.
    pub borrow_rate: f64,
    /// Bid-side oblivious put over the marginal strike.
    pub deposit_rate: f64,
    pub q_c: f64,
    pub q_b: f64,
    /// Collateral units pledged by borrowers so far.
    pub cumulative_borrow_flow: f64,
    /// Collateral units taken off the curve by lenders so far.
    pub cumulative_lend_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub amm_roi: f64,
    pub hold_roi: f64,
    pub outperformance: f64,
    pub initial_value: f64,
    pub amm_final_value: f64,
    pub hold_final_value: f64,
    /// Net value, marked at the expiry spot, of all borrower flows.
    pub borrower_agent_value: f64,
    /// Net value, marked at the expiry spot, of all lender flows.
    pub lender_agent_value: f64,
    pub borrow_trades: usize,
    pub lend_trades: usize,
    /// Trades cut short (or skipped) by liquidity or the no-shortfall cap.
    pub truncated_trades: usize,
    pub settlement: SettlementReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub series: Vec<SeriesRow>,
    pub summary: BacktestSummary,
}

impl BacktestReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        let mut f = File::create(path.as_ref())?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_series_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.series {
            w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `series.csv` into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_json(dir.join("report.json"))?;
        self.write_series_csv(File::create(dir.join("series.csv"))?)
    }
}

/// Outcome of the arbitrage step at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TradeEvent {
    None,
    Traded {
        side: Side,
        delta_q_c: f64,
        constrained: bool,
    },
    Blocked {
        side: Side,
    },
}

/// Step-wise market simulation over a price series.
pub struct Simulation<'a> {
    series: &'a PriceSeries,
    params: MarketParams,
    pool: PoolState,
    start: i64,
    end: i64,
    interval: i64,
    next_t: Option<i64>,
    rows: Vec<SeriesRow>,
    borrow_flow: f64,
    lend_flow: f64,
    borrow_trades: usize,
    lend_trades: usize,
    truncated: usize,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &BacktestConfig, series: &'a PriceSeries) -> Result<Self> {
        config.validate()?;
        let (start, end) = (config.start_timestamp(), config.end_timestamp());
        let covered = match (series.first(), series.last()) {
            (Some(first), Some(last)) => first.timestamp <= start && last.timestamp >= end,
            _ => false,
        };
        if !covered {
            return Err(Error::InsufficientCoverage { start, end });
        }
        Ok(Self {
            series,
            params: config.effective_params(),
            pool: PoolState::new(config.initial_q_c, config.initial_q_b)?,
            start,
            end,
            interval: config.sample_interval as i64,
            next_t: Some(start),
            rows: Vec::new(),
            borrow_flow: 0.0,
            lend_flow: 0.0,
            borrow_trades: 0,
            lend_trades: 0,
            truncated: 0,
        })
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    fn spot_at(&self, t: i64) -> f64 {
        // Coverage was checked up front.
        self.series.price_at(t).expect("sample inside price coverage")
    }

    /// Runs the arbitrage agents once at time `t`. Returns `None` after the
    /// expiry sample has been processed.
    pub fn step(&mut self) -> Result<Option<(SeriesRow, TradeEvent)>> {
        let Some(t) = self.next_t else {
            return Ok(None);
        };
        self.next_t = if t >= self.end {
            None
        } else {
            Some((t + self.interval).min(self.end))
        };
        self.pool.now_years = if t >= self.end {
            self.params.term_years
        } else {
            (t - self.start) as f64 / SECONDS_PER_YEAR
        };

        let spot = self.spot_at(t);
        let tau = self.pool.remaining_years(&self.params);
        let event = self.arbitrage(spot, tau)?;

        let strike = self.pool.marginal_strike();
        let x = oblivious_put_price(spot, &self.params, tau)?;
        let row = SeriesRow {
            t,
            spot,
            marginal_strike: strike,
            borrow_rate: self.params.ask_adjusted(x) / strike,
            deposit_rate: self.params.bid_adjusted(x) / strike,
            q_c: self.pool.q_c,
            q_b: self.pool.q_b,
            cumulative_borrow_flow: self.borrow_flow,
            cumulative_lend_flow: self.lend_flow,
        };
        self.rows.push(row);
        Ok(Some((row, event)))
    }

    fn arbitrage(&mut self, spot: f64, tau: f64) -> Result<TradeEvent> {
        for side in [Side::Borrow, Side::Lend] {
            if !arb_signal(&self.pool, &self.params, spot, tau, side)?.active {
                continue;
            }
            let trade = match find_equilibrium_trade(&self.pool, &self.params, spot, tau, side) {
                Ok(trade) => trade,
                Err(Error::NoFeasibleTrade(reason)) => {
                    log::info!("t={:.6}y {side} arbitrage blocked: {reason}", self.pool.now_years);
                    self.truncated += 1;
                    return Ok(TradeEvent::Blocked { side });
                }
                Err(e) => return Err(e),
            };
            let quote = match side {
                Side::Borrow => quote_borrow(&self.pool, &self.params, trade.delta_q_c, spot)?,
                Side::Lend => quote_lend(&self.pool, &self.params, trade.delta_q_c, spot)?,
            };
            execute(&mut self.pool, &quote)?;
            if trade.constrained {
                log::info!(
                    "t={:.6}y {side} trade truncated to {} by liquidity/no-shortfall cap",
                    self.pool.now_years,
                    trade.delta_q_c
                );
                self.truncated += 1;
            }
            match side {
                Side::Borrow => {
                    self.borrow_flow += trade.delta_q_c;
                    self.borrow_trades += 1;
                }
                Side::Lend => {
                    self.lend_flow += trade.delta_q_c;
                    self.lend_trades += 1;
                }
            }
            return Ok(TradeEvent::Traded {
                side,
                delta_q_c: trade.delta_q_c,
                constrained: trade.constrained,
            });
        }
        Ok(TradeEvent::None)
    }

    /// Runs any remaining samples, settles at the expiry price and builds the
    /// report.
    pub fn finish(mut self) -> Result<BacktestReport> {
        while self.step()?.is_some() {}
        let s_0 = self.spot_at(self.start);
        let s_t = self.spot_at(self.end);
        let settlement = settle_expiry(&self.pool, &self.params, s_t)?;

        let q_c0 = self.pool.initial_collateral();
        let q_b0 = self.pool.q_b_initial;
        let initial_value = q_b0 + q_c0 * s_0;
        let amm_final_value = settlement.final_cash + settlement.final_collateral * s_t;
        let hold_final_value = q_b0 + q_c0 * s_t;
        let amm_roi = (amm_final_value - initial_value) / initial_value;
        let hold_roi = (hold_final_value - initial_value) / initial_value;

        let mut agent_value = [0.0_f64; 2];
        for p in &self.pool.borrow_positions {
            agent_value[0] += p.cash_leg - p.delta_q_c * s_t;
        }
        for p in &self.pool.lend_positions {
            agent_value[1] -= p.cash_leg;
        }
        for f in &settlement.flows {
            let v = f.holder_cash + f.holder_collateral * s_t;
            match f.side {
                Side::Borrow => agent_value[0] += v,
                Side::Lend => agent_value[1] += v,
            }
        }

        Ok(BacktestReport {
            series: self.rows,
            summary: BacktestSummary {
                amm_roi,
                hold_roi,
                outperformance: amm_roi - hold_roi,
                initial_value,
                amm_final_value,
                hold_final_value,
                borrower_agent_value: agent_value[0],
                lender_agent_value: agent_value[1],
                borrow_trades: self.borrow_trades,
                lend_trades: self.lend_trades,
                truncated_trades: self.truncated,
                settlement,
            },
        })
    }
}

/// Runs a backtest on an in-memory series.
pub fn run_backtest_on(config: &BacktestConfig, series: &PriceSeries) -> Result<BacktestReport> {
    Simulation::new(config, series)?.finish()
}

/// Loads `config.price_file` and runs the backtest.
pub fn run_backtest(config: &BacktestConfig) -> Result<BacktestReport> {
    let series = load_prices(&config.price_file)?;
    run_backtest_on(config, &series)
}
