use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use num_format::{Locale, ToFormattedString};
use zll_core::backtest::{run_backtest, BacktestConfig};
use zll_core::engine::{quote_borrow, quote_lend, settle_expiry, solve_lend_for_cash, SettlementReport};
use zll_core::fixture::{ReferenceMarket, TableRow};
use zll_core::payoffs::PayoffFigure;
use zll_core::{MarketParams, PoolState, Quote, Side};

/// Zero-liquidation loans on a constant-product AMM.
#[derive(Parser, Debug)]
#[command(name = "zll", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price a borrow or lend trade against a pool.
    Quote {
        /// borrow or lend
        #[arg(long)]
        side: Side,
        /// Collateral quantity
        #[arg(long, group = "size")]
        qc: Option<f64>,
        /// Cash the lender pays (lend side only)
        #[arg(long, group = "size")]
        cash: Option<f64>,
        /// Spot price of the collateral
        #[arg(long)]
        spot: f64,
        /// Pool snapshot JSON; defaults to the bundled reference market
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Market parameters JSON
        #[arg(long, env = "ZLL_CONFIG")]
        params: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print the borrower and lender term tables of a reference market.
    Tables {
        /// Reference market JSON; defaults to the bundled one
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a backtest and write report.json and series.csv.
    Backtest {
        config: PathBuf,
        #[arg(long, default_value = "backtest-out")]
        out_dir: PathBuf,
    },
    /// Emit a payoff diagram as CSV.
    Payoff {
        /// borrower, lp or repayment
        #[arg(long)]
        figure: PayoffFigure,
        #[arg(long, default_value_t = 0.0)]
        min: f64,
        #[arg(long, default_value_t = 7000.0)]
        max: f64,
        #[arg(long, default_value_t = 100.0)]
        step: f64,
    },
    /// Settle every open position of an expired pool.
    Settle {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, env = "ZLL_CONFIG")]
        params: Option<PathBuf>,
        /// Spot price at expiry
        #[arg(long)]
        spot: f64,
        #[arg(long)]
        json: bool,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_params(path: Option<&Path>) -> Result<MarketParams> {
    let params = match path {
        Some(p) => read_json::<MarketParams>(p)?,
        None => ReferenceMarket::bundled().params,
    };
    params.validate()?;
    Ok(params)
}

fn load_pool(path: Option<&Path>) -> Result<PoolState> {
    let pool = match path {
        Some(p) => read_json::<PoolState>(p)?,
        None => ReferenceMarket::bundled().pool()?,
    };
    pool.validate()?;
    Ok(pool)
}

fn money(v: f64) -> String {
    let r = v.round() as i64;
    r.to_formatted_string(&Locale::en)
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn print_quote(q: &Quote, params: &MarketParams) {
    let (c, b) = (&params.collateral_symbol, &params.borrow_symbol);
    let cash_label = match q.side {
        Side::Borrow => "cash received",
        Side::Lend => "cash paid",
    };
    println!("side            {}", q.side);
    println!("collateral      {:.6} {c}", q.delta_q_c);
    println!("{cash_label:<16}{} {b}", money(q.cash_leg));
    println!("repayment       {} {b}", money(q.delta_q_b));
    println!("strike          {} {b}", money(q.strike));
    println!("oblivious put   {} {b} per {c}", money(q.oblivious_put));
    println!("LTV             {}", pct(q.implied_ltv));
    println!("rate X/K        {}", pct(q.implied_rate_table));
    println!("rate X/(K-X)    {}", pct(q.implied_rate_eq));
}

fn print_table(title: &str, input: &str, rows: &[TableRow], params: &MarketParams) {
    println!("{title}");
    println!(
        "{input:>12} {:>12} {:>12} {:>12} {:>10} {:>6} {:>6}",
        params.collateral_symbol, "cash", "repayment", "strike", "LTV", "rate"
    );
    for row in rows {
        match &row.quote {
            Some(q) => println!(
                "{:>12} {:>12.4} {:>12} {:>12} {:>10} {:>6} {:>6}",
                money(row.input),
                q.delta_q_c,
                money(q.cash_leg),
                money(q.delta_q_b),
                money(q.strike),
                format!("{:.0}%", 100.0 * q.implied_ltv),
                format!("{:.0}%", 100.0 * q.implied_rate_table),
            ),
            None => println!(
                "{:>12}  error: {}",
                money(row.input),
                row.error.as_deref().unwrap_or("")
            ),
        }
    }
}

fn print_settlement(rep: &SettlementReport) {
    println!("spot at expiry  {}", money(rep.spot_at_expiry));
    for f in &rep.flows {
        let outcome = match (f.side, f.settled_in_cash) {
            (Side::Borrow, true) => "repaid",
            (Side::Borrow, false) => "walked away",
            (Side::Lend, true) => "paid in cash",
            (Side::Lend, false) => "paid in collateral",
        };
        println!(
            "{:<6} #{:<4} strike {:>10}  {:<18} pool cash {:>+12.2} collateral {:>+10.6}",
            f.side.to_string(),
            f.index,
            money(f.strike),
            outcome,
            f.pool_cash,
            f.pool_collateral
        );
    }
    println!("final cash        {:.2}", rep.final_cash);
    println!("final collateral  {:.6}", rep.final_collateral);
}

fn usage_error(kind: ErrorKind, message: &str) -> clap::Error {
    Cli::command().error(kind, message)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Quote {
            side,
            qc,
            cash,
            spot,
            pool,
            params,
            json,
        } => {
            let pool = load_pool(pool.as_deref())?;
            let params = load_params(params.as_deref())?;
            let quote = match (side, qc, cash) {
                (Side::Borrow, Some(d), None) => quote_borrow(&pool, &params, d, spot)?,
                (Side::Lend, Some(d), None) => quote_lend(&pool, &params, d, spot)?,
                (Side::Lend, None, Some(c)) => solve_lend_for_cash(&pool, &params, c, spot)?,
                (Side::Borrow, None, Some(_)) => usage_error(
                    ErrorKind::ArgumentConflict,
                    "--cash applies to the lend side only; use --qc",
                )
                .exit(),
                _ => usage_error(ErrorKind::MissingRequiredArgument, "one of --qc or --cash is required").exit(),
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&quote)?);
            } else {
                print_quote(&quote, &params);
            }
        }
        Command::Tables { fixture, json } => {
            let market = match fixture {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    ReferenceMarket::from_json(&text)?
                }
                None => ReferenceMarket::bundled(),
            };
            let tables = market.tables()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&tables)?);
            } else {
                print_table("Borrowers", "pledged", &tables.borrow, &market.params);
                println!();
                print_table("Lenders", "cash paid", &tables.lend, &market.params);
            }
        }
        Command::Backtest { config, out_dir } => {
            let config = BacktestConfig::from_file(&config)?;
            let report = run_backtest(&config)?;
            report.write_outputs(&out_dir)?;
            let s = &report.summary;
            println!("AMM RoI          {}", pct(s.amm_roi));
            println!("buy & hold RoI   {}", pct(s.hold_roi));
            println!("outperformance   {}", pct(s.outperformance));
            println!(
                "trades           {} borrow, {} lend, {} truncated",
                s.borrow_trades, s.lend_trades, s.truncated_trades
            );
            println!("wrote {}", out_dir.display());
        }
        Command::Payoff { figure, min, max, step } => {
            println!("s_t,value");
            for (s, v) in figure.grid(min, max, step)? {
                println!("{s},{v}");
            }
        }
        Command::Settle {
            pool,
            params,
            spot,
            json,
        } => {
            let pool = load_pool(Some(&pool))?;
            let params = load_params(params.as_deref())?;
            let rep = settle_expiry(&pool, &params, spot)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            } else {
                print_settlement(&rep);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
