//! Cash and position accounting for one agent's book.
//!
//! Two books exist per agent (actual and counterfactual); the struct itself
//! is agnostic. Invariants enforced here and observable from the outside:
//! long-only (shares >= 0), unlevered (cash >= 0), and value conservation
//! per execution (|cash delta + fill * share delta| stays below 1e-9).
//!
//! Buys spend min(cash, buy_fraction * wealth); sells liquidate
//! sell_fraction of the position. An order that cannot execute (no cash,
//! no shares) degrades to Hold and is logged with a reason rather than
//! erroring or partially filling against the invariants.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("no price mark for {0}")]
    MissingMark(String),
    #[error("block start wealth must be positive, got {0}")]
    NonPositiveStart(f64),
}

/// Order side as decided by a policy (and as logged after execution).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
    Hold,
}

/// Which book an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerKind {
    Actual,
    Counterfactual,
}

/// One position. The cost basis is the volume-weighted fill price of the
/// buys that built the current lot (informational; it does not affect
/// accounting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub shares: f64,
    pub cost_basis: f64,
}

/// One executed order or degraded hold, as written to trades.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLogEntry {
    pub day: NaiveDate,
    pub agent_id: u8,
    pub ledger: LedgerKind,
    pub ticker: String,
    pub side: Side,
    pub fill_price: f64,
    /// Shares traded in this execution (0 for degraded holds).
    pub shares: f64,
    pub cash_after: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

/// Running totals for the invariants the run must never violate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantStats {
    /// Largest |cash_delta + fill * share_delta| seen across executions.
    pub max_conservation_err: f64,
    pub negative_cash_events: u64,
    pub negative_share_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub cash: f64,
    pub positions: BTreeMap<String, Position>,
    /// Consecutive non-trading days per ticker, reset by any execution.
    pub hold_streak: BTreeMap<String, u32>,
    /// Wealth recorded when the current evaluation block opened.
    pub block_start_wealth: f64,
    pub trade_log: Vec<TradeLogEntry>,
    pub invariants: InvariantStats,
}

/// Execution request; the engine supplies the fill (previous close) and the
/// agent's wealth marked at those same fills for buy sizing.
#[derive(Debug, Clone, Copy)]
pub struct ExecRequest<'a> {
    pub day: NaiveDate,
    pub agent_id: u8,
    pub kind: LedgerKind,
    pub ticker: &'a str,
    pub side: Side,
    pub fill: f64,
    pub wealth_mark: f64,
    pub buy_fraction: f64,
    pub sell_fraction: f64,
}

impl Ledger {
    /// Open the book: half the endowment in cash, a tenth per pool stock at
    /// the pre-simulation close (fractional shares).
    pub fn init(w0: f64, pool_closes: &[(String, f64)]) -> Ledger {
        let mut positions = BTreeMap::new();
        let mut hold_streak = BTreeMap::new();
        for (ticker, close) in pool_closes {
            positions.insert(
                ticker.clone(),
                Position {
                    shares: (0.10 * w0) / close,
                    cost_basis: *close,
                },
            );
            hold_streak.insert(ticker.clone(), 0);
        }
        Ledger {
            cash: 0.5 * w0,
            positions,
            hold_streak,
            block_start_wealth: w0,
            trade_log: Vec::new(),
            invariants: InvariantStats::default(),
        }
    }

    /// Mark-to-market wealth at the given closes.
    pub fn wealth(&self, marks: &BTreeMap<String, f64>) -> Result<f64, LedgerError> {
        let mut w = self.cash;
        for (ticker, pos) in &self.positions {
            let mark = marks
                .get(ticker)
                .ok_or_else(|| LedgerError::MissingMark(ticker.clone()))?;
            w += pos.shares * mark;
        }
        Ok(w)
    }

    /// Credit cash dividends going ex today to the shares held overnight.
    /// Must run before any of today's executions.
    pub fn credit_dividends(&mut self, per_share: &BTreeMap<String, f64>) {
        for (ticker, div) in per_share {
            if *div > 0.0 {
                if let Some(pos) = self.positions.get(ticker) {
                    self.cash += pos.shares * div;
                }
            }
        }
    }

    /// Record the block-open wealth used by `block_return`.
    pub fn begin_block(&mut self, marks: &BTreeMap<String, f64>) -> Result<(), LedgerError> {
        self.block_start_wealth = self.wealth(marks)?;
        Ok(())
    }

    /// Simple return of this book over the current block.
    pub fn block_return(&self, marks: &BTreeMap<String, f64>) -> Result<f64, LedgerError> {
        if self.block_start_wealth <= 0.0 {
            return Err(LedgerError::NonPositiveStart(self.block_start_wealth));
        }
        Ok((self.wealth(marks)? - self.block_start_wealth) / self.block_start_wealth)
    }

    /// Currency profit of this book over the current block.
    pub fn block_pnl(&self, marks: &BTreeMap<String, f64>) -> Result<f64, LedgerError> {
        Ok(self.wealth(marks)? - self.block_start_wealth)
    }

    /// Execute one order. Infeasible orders degrade to Hold with a reason;
    /// plain Holds only bump the streak and are not logged.
    pub fn execute(&mut self, req: ExecRequest<'_>) {
        match req.side {
            Side::Hold => {
                *self.hold_streak.entry(req.ticker.to_string()).or_insert(0) += 1;
            }
            Side::Buy => {
                let budget = (req.buy_fraction * req.wealth_mark).min(self.cash);
                if budget <= 0.0 {
                    self.degrade(req, "no cash available");
                    return;
                }
                let bought = budget / req.fill;
                let cash_before = self.cash;
                self.cash -= budget;
                let pos = self
                    .positions
                    .entry(req.ticker.to_string())
                    .or_insert(Position { shares: 0.0, cost_basis: 0.0 });
                let total = pos.shares + bought;
                pos.cost_basis = (pos.shares * pos.cost_basis + bought * req.fill) / total;
                pos.shares = total;
                self.note_execution(cash_before - self.cash, bought, req.fill);
                self.log(req, Side::Buy, bought, None);
                self.hold_streak.insert(req.ticker.to_string(), 0);
            }
            Side::Sell => {
                let held = self.positions.get(req.ticker).map_or(0.0, |p| p.shares);
                let selling = req.sell_fraction * held;
                if held <= 0.0 || selling <= 0.0 {
                    self.degrade(req, "no shares held");
                    return;
                }
                let proceeds = selling * req.fill;
                self.cash += proceeds;
                let pos = self.positions.get_mut(req.ticker).expect("held > 0");
                pos.shares -= selling;
                if pos.shares <= 0.0 {
                    self.positions.remove(req.ticker);
                }
                self.note_execution(proceeds, -selling, req.fill);
                self.log(req, Side::Sell, selling, None);
                self.hold_streak.insert(req.ticker.to_string(), 0);
            }
        }
    }

    fn degrade(&mut self, req: ExecRequest<'_>, why: &str) {
        let intended = match req.side {
            Side::Buy => "buy",
            Side::Sell => "sell",
            Side::Hold => "hold",
        };
        let reason = format!("degraded {intended} to hold: {why}");
        *self.hold_streak.entry(req.ticker.to_string()).or_insert(0) += 1;
        self.log(req, Side::Hold, 0.0, Some(reason));
    }

    fn log(&mut self, req: ExecRequest<'_>, side: Side, shares: f64, reason: Option<String>) {
        self.trade_log.push(TradeLogEntry {
            day: req.day,
            agent_id: req.agent_id,
            ledger: req.kind,
            ticker: req.ticker.to_string(),
            side,
            fill_price: req.fill,
            shares,
            cash_after: self.cash,
            reason,
        });
    }

    fn note_execution(&mut self, cash_delta_abs: f64, share_delta: f64, fill: f64) {
        // cash_delta_abs carries the signed cash move for sells (positive)
        // and the positive spend for buys; reconstruct the signed delta.
        let cash_delta = if share_delta >= 0.0 { -cash_delta_abs } else { cash_delta_abs };
        let err = (cash_delta + fill * share_delta).abs();
        if err > self.invariants.max_conservation_err {
            self.invariants.max_conservation_err = err;
        }
        if self.cash < 0.0 {
            self.invariants.negative_cash_events += 1;
        }
        if self.positions.values().any(|p| p.shares < 0.0) {
            self.invariants.negative_share_events += 1;
        }
    }

    /// Reset this book to mirror `source` (cash, positions, streaks) while
    /// keeping its own trade log and invariant counters. Used to re-anchor
    /// the counterfactual book at block boundaries.
    pub fn sync_to(&mut self, source: &Ledger) {
        self.cash = source.cash;
        self.positions = source.positions.clone();
        self.hold_streak = source.hold_streak.clone();
        self.block_start_wealth = source.block_start_wealth;
    }
}
