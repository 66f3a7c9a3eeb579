//! Daily simulation loop, block reviews, and the run log.
//!
//! Ordering contract for each simulated day t:
//!   1. credit dividends going ex on t to overnight positions (both books),
//!   2. build per-ticker snapshots from data visible before t,
//!   3. per agent in id order: decide and execute on the actual book, then
//!      decide under the opposite style and execute on the counterfactual
//!      book; fills are the previous close, wealth for buy sizing is marked
//!      once per book at those fills,
//!   4. on a block's last day: score both books, run every agent's style
//!      review against the same frozen population snapshot, apply all
//!      switches simultaneously, then resync the counterfactual book.
//!
//! Trailing days after the last complete block still trade; they produce no
//! block records. Every decision consumed by a policy is a pure function of
//! (config, seed, data before t), so reruns replay byte-identically.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{build_population, Style};
use crate::indicators::{fund_snapshot, tech_snapshot, IndicatorParams};
use crate::ledger::{ExecRequest, InvariantStats, Ledger, LedgerError, LedgerKind, Side, TradeLogEntry};
use crate::market_data::{DataError, DataSet, Sector};
use crate::metrics::{decision_gap, fit_mispricing, MispricingModel};
use crate::policy::{Action, DecisionContext, HoldingView, Policy, SwitchContext, TickerView};

pub const POPULATION: usize = 32;

/// How daily and switch decisions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rule,
    Llm,
    Ablation,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Mode::Rule),
            "llm" => Ok(Mode::Llm),
            "ablation" => Ok(Mode::Ablation),
            other => Err(format!("unknown mode {other:?} (expected rule, llm, or ablation)")),
        }
    }
}

/// Everything the engine needs besides data and a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub seed: u64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub block_length: usize,
    pub initial_wealth: f64,
    pub buy_fraction: f64,
    pub sell_fraction: f64,
    /// Bars required before the first simulated day (indicator warmup).
    pub warmup_days: usize,
    /// Forward-return horizon of the mispricing regression, in bars.
    pub forward_days: usize,
    pub min_fit_pairs: usize,
    pub indicators: IndicatorParams,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no trading days between {start} and {end}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
    #[error("{have} bars of history before the start date, need {need}")]
    InsufficientWarmup { have: usize, need: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// One agent-block outcome, written to blocks.jsonl. `style` is the style
/// held during the block; `switch` reports the review decision at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_index: u32,
    pub agent_id: u8,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub style: Style,
    pub actual_return: f64,
    pub counterfactual_return: f64,
    pub switch: bool,
    /// Opposite-style population share frozen when the block opened.
    pub population_share_other: f64,
    /// Mean block profit of agents currently in the opposite style (0 when
    /// that cohort is empty).
    pub opposite_avg_profit: f64,
    /// This agent's own counterfactual book profit over the block.
    pub own_counterfactual_profit: f64,
    pub rationale: String,
}

/// Noteworthy non-fatal happenings (policy fallbacks, reconciliation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub day: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent_id: Option<u8>,
    pub detail: String,
}

/// End-of-run wealth per agent, marked at the final close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentWealth {
    pub agent_id: u8,
    pub final_style: Style,
    pub actual: f64,
    pub counterfactual: f64,
}

/// Complete, replayable output of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub n_days: usize,
    pub n_blocks: usize,
    pub trades: Vec<TradeLogEntry>,
    pub blocks: Vec<BlockRecord>,
    pub events: Vec<EngineEvent>,
    pub invariants: InvariantStats,
    pub final_wealth: Vec<AgentWealth>,
}

/// Style counts over the live population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationShares {
    pub tech: u32,
    pub fund: u32,
}

pub fn population_shares(styles: &[Style]) -> PopulationShares {
    let tech = styles.iter().filter(|s| **s == Style::Tech).count() as u32;
    PopulationShares {
        tech,
        fund: styles.len() as u32 - tech,
    }
}

/// The one uniform draw a policy may consume per (agent, block): derived
/// from the run seed by a splitmix-style hash feeding ChaCha8, so draws are
/// independent of iteration order and stable across platforms.
pub fn seed_draw(seed: u64, agent_id: u8, block_index: u32) -> f64 {
    let mut z = seed
        ^ (agent_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (block_index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.random::<f64>()
}

fn closes_at(data: &DataSet, idx: usize) -> BTreeMap<String, f64> {
    data.pool
        .iter()
        .map(|s| (s.ticker.clone(), s.bars[idx].close))
        .collect()
}

/// Per-sector models fitted on data strictly before `visible_before`.
/// Sectors without enough history yet simply have no model (gaps are NA).
fn models_asof(
    data: &DataSet,
    visible_before: NaiveDate,
    forward_days: usize,
    min_pairs: usize,
) -> BTreeMap<Sector, MispricingModel> {
    let mut models = BTreeMap::new();
    for (sector, aux) in &data.aux {
        if let Ok(m) = fit_mispricing(aux, visible_before, forward_days, min_pairs) {
            models.insert(*sector, m);
        }
    }
    models
}

fn pool_gaps(
    data: &DataSet,
    models: &BTreeMap<Sector, MispricingModel>,
    visible_before: NaiveDate,
) -> Vec<Option<f64>> {
    data.pool
        .iter()
        .map(|s| {
            models
                .get(&s.sector)
                .and_then(|m| decision_gap(s, m, visible_before))
        })
        .collect()
}

struct AgentBooks {
    actual: Ledger,
    counterfactual: Ledger,
}

/// Run the full simulation. The policy decides; the engine owns all state,
/// data visibility, and bookkeeping.
pub fn run_simulation(
    params: &EngineParams,
    data: &DataSet,
    policy: &dyn Policy,
) -> Result<RunLog, EngineError> {
    let cal = &data.calendar;
    let i0 = cal.partition_point(|d| *d < params.start);
    let i_end = cal.partition_point(|d| *d <= params.end);
    if i0 >= i_end {
        return Err(EngineError::EmptyWindow {
            start: params.start,
            end: params.end,
        });
    }
    let need = params.warmup_days.max(1);
    if i0 < need {
        return Err(EngineError::InsufficientWarmup { have: i0, need });
    }
    let n_days = i_end - i0;
    let block_len = params.block_length.max(1);
    let n_blocks = n_days / block_len;

    let population = build_population();
    let mut styles: Vec<Style> = population.iter().map(|a| a.initial_style).collect();
    let init_closes: Vec<(String, f64)> = data
        .pool
        .iter()
        .map(|s| (s.ticker.clone(), s.bars[i0 - 1].close))
        .collect();
    let mut books: Vec<AgentBooks> = (0..POPULATION)
        .map(|_| AgentBooks {
            actual: Ledger::init(params.initial_wealth, &init_closes),
            counterfactual: Ledger::init(params.initial_wealth, &init_closes),
        })
        .collect();

    let mut blocks: Vec<BlockRecord> = Vec::new();
    let mut events: Vec<EngineEvent> = Vec::new();
    let mut shares_at_open = population_shares(&styles);

    for k in 0..n_days {
        let i = i0 + k;
        let date = cal[i];

        if k % block_len == 0 && k / block_len < n_blocks {
            let marks = closes_at(data, i - 1);
            for b in books.iter_mut() {
                b.actual.begin_block(&marks)?;
                b.counterfactual.begin_block(&marks)?;
            }
            shares_at_open = population_shares(&styles);
        }

        // Dividends go ex this morning and accrue to overnight positions on
        // both books before any order executes.
        let dividends: BTreeMap<String, f64> = data
            .pool
            .iter()
            .map(|s| (s.ticker.clone(), s.bars[i].dividend))
            .collect();
        for b in books.iter_mut() {
            b.actual.credit_dividends(&dividends);
            b.counterfactual.credit_dividends(&dividends);
        }

        // Shared per-day inputs, all strictly pre-t.
        let fills = closes_at(data, i - 1);
        let day_models = models_asof(data, date, params.forward_days, params.min_fit_pairs);
        let day_gaps = pool_gaps(data, &day_models, date);
        let day_tech: Vec<_> = data
            .pool
            .iter()
            .map(|s| tech_snapshot(&s.bars[..i], &params.indicators))
            .collect();
        let day_fund: Vec<_> = data
            .pool
            .iter()
            .map(|s| fund_snapshot(s.latest_report(date)))
            .collect();

        for (a, agent) in population.iter().enumerate() {
            for kind in [LedgerKind::Actual, LedgerKind::Counterfactual] {
                let style = match kind {
                    LedgerKind::Actual => styles[a],
                    LedgerKind::Counterfactual => styles[a].opposite(),
                };
                let ledger = match kind {
                    LedgerKind::Actual => &books[a].actual,
                    LedgerKind::Counterfactual => &books[a].counterfactual,
                };
                let wealth_mark = ledger.wealth(&fills)?;
                let ctx = DecisionContext {
                    date,
                    style,
                    cash: ledger.cash,
                    tickers: data
                        .pool
                        .iter()
                        .enumerate()
                        .map(|(j, s)| TickerView {
                            ticker: s.ticker.clone(),
                            tech: day_tech[j],
                            fund: day_fund[j],
                            mispricing_gap: day_gaps[j],
                            position_shares: ledger
                                .positions
                                .get(&s.ticker)
                                .map_or(0.0, |p| p.shares),
                            hold_streak: ledger.hold_streak.get(&s.ticker).copied().unwrap_or(0),
                        })
                        .collect(),
                };
                let actions = policy.decide_daily(agent, &ctx);

                // Reconcile replies against the pool: first action per
                // ticker wins, unknown tickers are dropped, missing tickers
                // hold. Deviations are logged, not fatal.
                let mut by_ticker: BTreeMap<&str, &Action> = BTreeMap::new();
                for act in &actions {
                    if !data.pool.iter().any(|s| s.ticker == act.ticker) {
                        events.push(EngineEvent {
                            day: date,
                            agent_id: Some(agent.id),
                            detail: format!("dropped action for unknown ticker {}", act.ticker),
                        });
                        continue;
                    }
                    by_ticker.entry(act.ticker.as_str()).or_insert(act);
                }
                let ledger = match kind {
                    LedgerKind::Actual => &mut books[a].actual,
                    LedgerKind::Counterfactual => &mut books[a].counterfactual,
                };
                for s in &data.pool {
                    let side = match by_ticker.get(s.ticker.as_str()) {
                        Some(act) => {
                            if act.reason.starts_with("llm fallback:") {
                                events.push(EngineEvent {
                                    day: date,
                                    agent_id: Some(agent.id),
                                    detail: format!("{} {:?}: {}", s.ticker, kind, act.reason),
                                });
                            }
                            act.side
                        }
                        None => {
                            events.push(EngineEvent {
                                day: date,
                                agent_id: Some(agent.id),
                                detail: format!("no decision returned for {}; holding", s.ticker),
                            });
                            Side::Hold
                        }
                    };
                    ledger.execute(ExecRequest {
                        day: date,
                        agent_id: agent.id,
                        kind,
                        ticker: &s.ticker,
                        side,
                        fill: fills[&s.ticker],
                        wealth_mark,
                        buy_fraction: params.buy_fraction,
                        sell_fraction: params.sell_fraction,
                    });
                }
            }
        }

        let is_block_end = (k + 1) % block_len == 0 && (k + 1) / block_len <= n_blocks;
        if is_block_end {
            let block_index = ((k + 1) / block_len) as u32;
            let start_date = cal[i0 + (block_index as usize - 1) * block_len];
            let marks_end = closes_at(data, i);
            // Review-time visibility includes the block's final close.
            let visible = date.succ_opt().expect("calendar overflow");
            let review_models = models_asof(data, visible, params.forward_days, params.min_fit_pairs);
            let review_gaps = pool_gaps(data, &review_models, visible);
            let known: Vec<f64> = review_gaps.iter().flatten().map(|g| g.abs()).collect();
            let mean_abs_gap = if known.is_empty() {
                0.0
            } else {
                known.iter().sum::<f64>() / known.len() as f64
            };
            let review_fund: Vec<_> = data
                .pool
                .iter()
                .map(|s| fund_snapshot(s.latest_report(visible)))
                .collect();

            let pnls: Vec<f64> = books
                .iter()
                .map(|b| b.actual.block_pnl(&marks_end))
                .collect::<Result<_, _>>()?;
            let avg_profit = |of_style: Style| -> f64 {
                let cohort: Vec<f64> = styles
                    .iter()
                    .zip(&pnls)
                    .filter(|(s, _)| **s == of_style)
                    .map(|(_, p)| *p)
                    .collect();
                if cohort.is_empty() {
                    0.0
                } else {
                    cohort.iter().sum::<f64>() / cohort.len() as f64
                }
            };
            let avg_by_style = (avg_profit(Style::Tech), avg_profit(Style::Fund));

            let mut next_styles = styles.clone();
            for (a, agent) in population.iter().enumerate() {
                let style = styles[a];
                let (n_current, n_opposite) = match style {
                    Style::Tech => (shares_at_open.tech, shares_at_open.fund),
                    Style::Fund => (shares_at_open.fund, shares_at_open.tech),
                };
                let actual_return = books[a].actual.block_return(&marks_end)?;
                let counterfactual_return = books[a].counterfactual.block_return(&marks_end)?;
                let wealth_end = books[a].actual.wealth(&marks_end)?;
                let own_counterfactual_profit = books[a].counterfactual.block_pnl(&marks_end)?;
                let opposite_avg_profit = match style.opposite() {
                    Style::Tech => avg_by_style.0,
                    Style::Fund => avg_by_style.1,
                };
                let holdings: Vec<HoldingView> = data
                    .pool
                    .iter()
                    .enumerate()
                    .filter_map(|(j, s)| {
                        books[a].actual.positions.get(&s.ticker).map(|p| HoldingView {
                            ticker: s.ticker.clone(),
                            shares: p.shares,
                            price: marks_end[&s.ticker],
                            fund: review_fund[j],
                        })
                    })
                    .collect();
                let ctx = SwitchContext {
                    block_index,
                    current_style: style,
                    traits: agent.traits,
                    actual_return,
                    counterfactual_return,
                    block_pnl: pnls[a],
                    ytd_pnl: wealth_end - params.initial_wealth,
                    cash: books[a].actual.cash,
                    holdings,
                    opposite_avg_profit,
                    own_counterfactual_profit,
                    n_current,
                    n_opposite,
                    mean_abs_gap,
                    seed_draw: seed_draw(params.seed, agent.id, block_index),
                };
                let decision = policy.decide_switch(agent, &ctx);
                if decision.reason.starts_with("llm fallback:") {
                    events.push(EngineEvent {
                        day: date,
                        agent_id: Some(agent.id),
                        detail: format!("style review block {block_index}: {}", decision.reason),
                    });
                }
                blocks.push(BlockRecord {
                    block_index,
                    agent_id: agent.id,
                    start_date,
                    end_date: date,
                    style,
                    actual_return,
                    counterfactual_return,
                    switch: decision.switch,
                    population_share_other: n_opposite as f64 / POPULATION as f64,
                    opposite_avg_profit,
                    own_counterfactual_profit,
                    rationale: decision.reason,
                });
                if decision.switch {
                    next_styles[a] = style.opposite();
                }
            }
            // All review outcomes apply at once, then the counterfactual
            // book re-shadows the actual one for the next block.
            styles = next_styles;
            for b in books.iter_mut() {
                let src = b.actual.clone();
                b.counterfactual.sync_to(&src);
            }
        }
    }

    let final_marks = closes_at(data, i_end - 1);
    let mut final_wealth = Vec::with_capacity(POPULATION);
    let mut trades = Vec::new();
    let mut invariants = InvariantStats::default();
    for (a, b) in books.iter().enumerate() {
        final_wealth.push(AgentWealth {
            agent_id: a as u8,
            final_style: styles[a],
            actual: b.actual.wealth(&final_marks)?,
            counterfactual: b.counterfactual.wealth(&final_marks)?,
        });
        for lg in [&b.actual, &b.counterfactual] {
            trades.extend(lg.trade_log.iter().cloned());
            invariants.max_conservation_err =
                invariants.max_conservation_err.max(lg.invariants.max_conservation_err);
            invariants.negative_cash_events += lg.invariants.negative_cash_events;
            invariants.negative_share_events += lg.invariants.negative_share_events;
        }
    }

    Ok(RunLog {
        n_days,
        n_blocks,
        trades,
        blocks,
        events,
        invariants,
        final_wealth,
    })
}

/// Recompute one book's final wealth from the trade log and raw data alone.
/// Dividends are re-derived from the bars; logged fills drive all cash and
/// share movement. Used to audit that the engine's books match their log.
pub fn replay_final_wealth(
    params: &EngineParams,
    data: &DataSet,
    trades: &[TradeLogEntry],
    agent_id: u8,
    kind: LedgerKind,
) -> Result<f64, EngineError> {
    let cal = &data.calendar;
    let i0 = cal.partition_point(|d| *d < params.start);
    let i_end = cal.partition_point(|d| *d <= params.end);
    if i0 == 0 || i0 >= i_end {
        return Err(EngineError::EmptyWindow {
            start: params.start,
            end: params.end,
        });
    }
    let block_len = params.block_length.max(1);
    let n_days = i_end - i0;
    let n_blocks = n_days / block_len;

    #[derive(Clone)]
    struct Book<'a> {
        cash: f64,
        shares: BTreeMap<&'a str, f64>,
    }
    let init = || {
        let mut shares = BTreeMap::new();
        for s in &data.pool {
            shares.insert(s.ticker.as_str(), params.initial_wealth * 0.10 / s.bars[i0 - 1].close);
        }
        Book { cash: params.initial_wealth * 0.5, shares }
    };
    // Both books are needed even when only one is asked for: the engine
    // re-bases the counterfactual book onto the actual one at block ends.
    let mut actual = init();
    let mut counterfactual = init();

    let mine = |want: LedgerKind| -> Vec<&TradeLogEntry> {
        trades
            .iter()
            .filter(|t| t.agent_id == agent_id && t.ledger == want)
            .collect()
    };
    let log_a = mine(LedgerKind::Actual);
    let log_c = mine(LedgerKind::Counterfactual);
    let (mut cur_a, mut cur_c) = (0, 0);

    let apply = |book: &mut Book, log: &[&TradeLogEntry], cursor: &mut usize, date: NaiveDate| {
        while *cursor < log.len() && log[*cursor].day == date {
            let t = log[*cursor];
            match t.side {
                Side::Buy => {
                    book.cash -= t.shares * t.fill_price;
                    *book.shares.get_mut(t.ticker.as_str()).unwrap() += t.shares;
                }
                Side::Sell => {
                    book.cash += t.shares * t.fill_price;
                    *book.shares.get_mut(t.ticker.as_str()).unwrap() -= t.shares;
                }
                Side::Hold => {}
            }
            *cursor += 1;
        }
    };

    for k in 0..n_days {
        let i = i0 + k;
        let date = cal[i];
        for s in &data.pool {
            let div = s.bars[i].dividend;
            if div > 0.0 {
                actual.cash += actual.shares[s.ticker.as_str()] * div;
                counterfactual.cash += counterfactual.shares[s.ticker.as_str()] * div;
            }
        }
        apply(&mut actual, &log_a, &mut cur_a, date);
        apply(&mut counterfactual, &log_c, &mut cur_c, date);
        if (k + 1) % block_len == 0 && (k + 1) / block_len <= n_blocks {
            counterfactual = actual.clone();
        }
    }

    let book = match kind {
        LedgerKind::Actual => &actual,
        LedgerKind::Counterfactual => &counterfactual,
    };
    let mut wealth = book.cash;
    for s in &data.pool {
        wealth += book.shares[s.ticker.as_str()] * s.bars[i_end - 1].close;
    }
    Ok(wealth)
}
