use thiserror::Error;

/// Errors raised by the quoting engine, pricing kernel and backtester.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("invalid pool: {0}")]
    InvalidPool(String),

    #[error("insufficient liquidity: trade needs {requested} of {available} borrow-currency units")]
    InsufficientLiquidity { requested: f64, available: f64 },

    #[error("lend of {requested} collateral units would drain the pool ({available} available)")]
    DrainsCollateral { requested: f64, available: f64 },

    #[error("uneconomic trade: cash leg {cash_leg} is not positive")]
    UneconomicTrade { cash_leg: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("stale quote: priced against pool revision {quoted}, pool is at revision {current}")]
    StaleQuote { quoted: u64, current: u64 },

    #[error("quote does not match the current pool: {0}")]
    QuoteMismatch(String),

    #[error("no-shortfall condition violated (margin {margin})")]
    Shortfall { margin: f64 },

    #[error("settlement requested at t={now_years} before expiry at t={term_years}")]
    NotExpired { now_years: f64, term_years: f64 },

    #[error("arbitrage signal is not active")]
    SignalInactive,

    #[error("no feasible trade: {0}")]
    NoFeasibleTrade(String),

    #[error("price data: line {line}: {message}")]
    PriceData { line: u64, message: String },

    #[error("price series does not cover [{start}, {end}]")]
    InsufficientCoverage { start: i64, end: i64 },

    #[error("invalid backtest config: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and >= 0, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {value}")))
    }
}
