//! Decision policies: the trait-conditioned rule policy, the ablation
//! variant, and the LLM-backed policy sharing the same interface.
//!
//! A policy sees exactly what the engine exposes through the context
//! structs; everything inside is point-in-time data for the decision day,
//! so any implementation is replayable from the same inputs.

mod llm;
mod prompts;
mod rule;

pub use llm::{LlmConfig, LlmError, LlmPolicy};
pub use prompts::{render_switch_prompt, render_trading_prompt, PROMPT_SWITCHING, PROMPT_TRADING_FUND, PROMPT_TRADING_TECH};
pub use rule::{AblationPolicy, RulePolicy, RuleThresholds, SwitchWeights};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Style, TraitVector};
use crate::indicators::{FundSnapshot, TechSnapshot};
pub use crate::ledger::Side;

/// One per-ticker decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub ticker: String,
    pub side: Side,
    pub confidence: f64,
    pub reason: String,
}

/// Everything a policy may see about one pool ticker on a decision day.
#[derive(Debug, Clone)]
pub struct TickerView {
    pub ticker: String,
    pub tech: TechSnapshot,
    pub fund: FundSnapshot,
    /// Decision-time mispricing gap from the sector model; None before the
    /// model has enough history.
    pub mispricing_gap: Option<f64>,
    pub position_shares: f64,
    pub hold_streak: u32,
}

/// Point-in-time inputs for one agent's daily decision over the pool.
#[derive(Debug, Clone)]
pub struct DecisionContext {
    pub date: NaiveDate,
    pub style: Style,
    pub cash: f64,
    pub tickers: Vec<TickerView>,
}

/// A held position as rendered into the style review.
#[derive(Debug, Clone)]
pub struct HoldingView {
    pub ticker: String,
    pub shares: f64,
    pub price: f64,
    pub fund: FundSnapshot,
}

/// Inputs for the end-of-block style review.
#[derive(Debug, Clone)]
pub struct SwitchContext {
    pub block_index: u32,
    pub current_style: Style,
    pub traits: TraitVector,
    /// Own wealth return over the block just ended.
    pub actual_return: f64,
    /// Counterfactual ledger's return over the same block.
    pub counterfactual_return: f64,
    pub block_pnl: f64,
    pub ytd_pnl: f64,
    pub cash: f64,
    pub holdings: Vec<HoldingView>,
    /// Average block profit over agents currently in the opposite style
    /// (0 when that cohort is empty).
    pub opposite_avg_profit: f64,
    pub own_counterfactual_profit: f64,
    pub n_current: u32,
    pub n_opposite: u32,
    /// Pool mean of |mispricing_gap| at review time; NA gaps skipped, 0
    /// when none are available.
    pub mean_abs_gap: f64,
    /// Uniform draw in [0,1) derived from (run seed, agent id, block
    /// index); the only randomness a policy may consume.
    pub seed_draw: f64,
}

/// Outcome of a style review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchDecision {
    pub switch: bool,
    pub reason: String,
}

/// A trading policy: five per-ticker actions each day, one style decision
/// per block. Implementations must be deterministic functions of their
/// inputs (the LLM policy is deterministic given the transport's replies).
pub trait Policy {
    fn decide_daily(&self, agent: &AgentSpec, ctx: &DecisionContext) -> Vec<Action>;
    fn decide_switch(&self, agent: &AgentSpec, ctx: &SwitchContext) -> SwitchDecision;
}
