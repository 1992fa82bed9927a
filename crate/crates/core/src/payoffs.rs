//! Closed-form payoffs at expiry and a stylized liquidating-loan comparator.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, Error, Result};

/// Borrower PnL per collateral unit: keeps the upside above the strike,
/// gives up the collateral below it, and pays `s_0 - cash_received` for the
/// privilege.
pub fn borrower_pnl(s_t: f64, strike: f64, cash_received: f64, s_0: f64) -> Result<f64> {
    ensure_non_negative("s_t", s_t)?;
    ensure_non_negative("strike", strike)?;
    ensure_non_negative("cash_received", cash_received)?;
    ensure_non_negative("s_0", s_0)?;
    Ok(s_t.max(strike) - strike - (s_0 - cash_received))
}

/// Liquidity provider's pro-rata PnL on a loan of `delta_q_c` units.
pub fn lp_pnl(s_t: f64, strike: f64, cash_out_per_unit: f64, share: f64, delta_q_c: f64) -> Result<f64> {
    ensure_non_negative("s_t", s_t)?;
    ensure_non_negative("strike", strike)?;
    ensure_non_negative("cash_out_per_unit", cash_out_per_unit)?;
    ensure_non_negative("delta_q_c", delta_q_c)?;
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::Domain(format!("share must lie in [0, 1], got {share}")));
    }
    Ok(share * delta_q_c * (s_t.min(strike) - cash_out_per_unit))
}

/// What the lender receives per unit: `min(S_T, K)`.
pub fn repayment_value(s_t: f64, strike: f64) -> Result<f64> {
    ensure_non_negative("s_t", s_t)?;
    ensure_non_negative("strike", strike)?;
    Ok(s_t.min(strike))
}

/// The same repayment written as a short put on top of the strike.
pub fn repayment_via_put(s_t: f64, strike: f64) -> Result<f64> {
    ensure_non_negative("s_t", s_t)?;
    ensure_non_negative("strike", strike)?;
    Ok(strike - (strike - s_t).max(0.0))
}

/// A conventional over-collateralized loan that is partially liquidated
/// whenever its loan-to-value reaches the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidatingLoan {
    pub loan: f64,
    pub collateral: f64,
    pub ltv_threshold: f64,
    /// Fee charged on liquidation proceeds.
    pub penalty: f64,
    /// Fraction of the remaining collateral sold per liquidation.
    pub liquidation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidationOutcome {
    pub final_collateral: f64,
    pub remaining_loan: f64,
    /// Proceeds exceeding the loan, returned to the borrower.
    pub surplus_cash: f64,
    pub fees_paid: f64,
    pub liquidations: usize,
    /// Terminal collateral value plus surplus minus the remaining loan.
    pub payoff: f64,
}

impl LiquidatingLoan {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("loan", self.loan)?;
        ensure_non_negative("collateral", self.collateral)?;
        ensure_non_negative("penalty", self.penalty)?;
        if !(self.ltv_threshold > 0.0 && self.ltv_threshold <= 1.0) {
            return Err(Error::Domain(format!(
                "ltv_threshold must lie in (0, 1], got {}",
                self.ltv_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.liquidation_fraction) {
            return Err(Error::Domain(format!(
                "liquidation_fraction must lie in [0, 1], got {}",
                self.liquidation_fraction
            )));
        }
        if self.penalty > 1.0 {
            return Err(Error::Domain(format!(
                "penalty must be at most 1, got {}",
                self.penalty
            )));
        }
        Ok(())
    }

    /// Walks a price path, checking the LTV once per sample and liquidating
    /// at most once per sample.
    pub fn run(&self, path: &[f64]) -> Result<LiquidationOutcome> {
        self.validate()?;
        let Some(&terminal) = path.last() else {
            return Err(Error::Domain("price path is empty".into()));
        };
        let mut collateral = self.collateral;
        let mut loan = self.loan;
        let mut surplus = 0.0;
        let mut fees = 0.0;
        let mut liquidations = 0;
        for &price in path {
            ensure_non_negative("price", price)?;
            let value = collateral * price;
            let breached = loan > 0.0 && (value <= 0.0 || loan / value >= self.ltv_threshold);
            if !breached || self.liquidation_fraction == 0.0 || collateral == 0.0 {
                continue;
            }
            let sold = self.liquidation_fraction * collateral;
            let proceeds = sold * price;
            let fee = self.penalty * proceeds;
            let net = proceeds - fee;
            collateral -= sold;
            fees += fee;
            liquidations += 1;
            if net >= loan {
                surplus += net - loan;
                loan = 0.0;
            } else {
                loan -= net;
            }
        }
        Ok(LiquidationOutcome {
            final_collateral: collateral,
            remaining_loan: loan,
            surplus_cash: surplus,
            fees_paid: fees,
            liquidations,
            payoff: collateral * terminal + surplus - loan,
        })
    }
}

/// One collateral unit financed with `loan`, run along `path`.
pub fn liquidating_loan_path_payoff(
    path: &[f64],
    loan: f64,
    ltv_threshold: f64,
    penalty: f64,
    liquidation_fraction: f64,
) -> Result<LiquidationOutcome> {
    LiquidatingLoan {
        loan,
        collateral: 1.0,
        ltv_threshold,
        penalty,
        liquidation_fraction,
    }
    .run(path)
}

/// Named payoff diagrams with the example terms used in the documentation:
/// 1 unit pledged at 4,000, 2,000 repayment, 1,850 paid out, 50% pool share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffFigure {
    Borrower,
    Lp,
    Repayment,
}

impl std::str::FromStr for PayoffFigure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "borrower" => Ok(Self::Borrower),
            "lp" => Ok(Self::Lp),
            "repayment" => Ok(Self::Repayment),
            other => Err(Error::Domain(format!("unknown payoff figure {other:?}"))),
        }
    }
}

pub const EXAMPLE_SPOT: f64 = 4000.0;
pub const EXAMPLE_STRIKE: f64 = 2000.0;
pub const EXAMPLE_CASH: f64 = 1850.0;
pub const EXAMPLE_SHARE: f64 = 0.5;

impl PayoffFigure {
    pub fn value(self, s_t: f64) -> Result<f64> {
        match self {
            Self::Borrower => borrower_pnl(s_t, EXAMPLE_STRIKE, EXAMPLE_CASH, EXAMPLE_SPOT),
            Self::Lp => lp_pnl(s_t, EXAMPLE_STRIKE, EXAMPLE_CASH, EXAMPLE_SHARE, 1.0),
            Self::Repayment => repayment_value(s_t, EXAMPLE_STRIKE),
        }
    }

    /// `(s_t, value)` pairs on `[lo, hi]` in steps of `step`, both ends included.
    pub fn grid(self, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, f64)>> {
        ensure_non_negative("lo", lo)?;
        if !(step > 0.0 && step.is_finite()) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Domain(format!("bad grid [{lo}, {hi}] step {step}")));
        }
        let n = ((hi - lo) / step).floor() as usize;
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..=n {
            let s = lo + i as f64 * step;
            out.push((s, self.value(s)?));
        }
        if out.last().is_none_or(|&(s, _)| s < hi) {
            out.push((hi, self.value(hi)?));
        }
        Ok(out)
    }
}
