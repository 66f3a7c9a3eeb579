//! Per-agent alignment scores (LAS, HAS, AAS, MAS) and the sector-level
//! mispricing regression they rely on.
//!
//! Scored events are the block indices 2..=B: each compares the review at
//! the end of block t with the one before it, so block 1 has no prior
//! reference and is recorded but never scored. Empty event sets score 0,
//! keeping all 32 agents in the cohort tests.
//!
//! Visibility convention shared by the regression paths: a quantity anchored
//! at bar index i uses the close of bar i, the latest report with
//! filing_date on or before that bar's date, and (when realized) the close
//! `forward_days` bars later. Fit windows contain only pairs whose forward
//! bar is dated strictly before `visible_before`, so refitting per decision
//! day or per block start never peeks ahead.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Driver, Style};
use crate::engine::BlockRecord;
use crate::market_data::{Sector, StockSeries};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{ticker}: {have} usable regression pairs, need at least {need}")]
    InsufficientPairs {
        ticker: String,
        have: usize,
        need: usize,
    },
    #[error("{ticker}: degenerate regressor (constant X)")]
    DegenerateRegressor { ticker: String },
    #[error("no auxiliary series for sector {0}")]
    MissingSector(String),
    #[error("sector {sector} model unusable on full data: {source}")]
    SectorModel {
        sector: String,
        #[source]
        source: Box<MetricsError>,
    },
}

/// Fitted sector model: expected 20-day forward return as an affine
/// function of the valuation ratio X = market cap / latest OCF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MispricingModel {
    pub alpha: f64,
    pub beta: f64,
    pub auxiliary_ticker: String,
    pub fit_start: NaiveDate,
    pub fit_end: NaiveDate,
    pub n_pairs: usize,
}

/// Valuation regressor at bar `idx`: close * shares_outstanding / OCF of
/// the latest report filed on or before that bar's date. None without a
/// usable filing or when OCF is zero.
pub fn valuation_x(series: &StockSeries, idx: usize) -> Option<f64> {
    let date = series.bars[idx].date;
    let report = series
        .reports
        .iter()
        .filter(|r| r.filing_date <= date)
        .max_by_key(|r| (r.filing_date, r.period_end))?;
    if report.ocf == 0.0 {
        return None;
    }
    Some(series.bars[idx].close * series.shares_outstanding / report.ocf)
}

/// Realized forward return anchored at bar `idx`, if the window completes
/// inside the data.
pub fn realized_forward_return(series: &StockSeries, idx: usize, forward_days: usize) -> Option<f64> {
    let j = idx + forward_days;
    if j >= series.bars.len() {
        return None;
    }
    let c0 = series.bars[idx].close;
    Some((series.bars[j].close - c0) / c0)
}

/// Fit Y = alpha + beta*X on the auxiliary ticker over every anchor whose
/// forward bar is dated strictly before `visible_before`. Zero-OCF anchors
/// are dropped; fewer than `min_pairs` usable pairs or a constant X is an
/// error.
pub fn fit_mispricing(
    aux: &StockSeries,
    visible_before: NaiveDate,
    forward_days: usize,
    min_pairs: usize,
) -> Result<MispricingModel, MetricsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut fit_start = None;
    let mut fit_end = None;
    for idx in 0..aux.bars.len() {
        let j = idx + forward_days;
        if j >= aux.bars.len() || aux.bars[j].date >= visible_before {
            break;
        }
        let Some(x) = valuation_x(aux, idx) else { continue };
        let y = realized_forward_return(aux, idx, forward_days).expect("forward bar checked");
        xs.push(x);
        ys.push(y);
        if fit_start.is_none() {
            fit_start = Some(aux.bars[idx].date);
        }
        fit_end = Some(aux.bars[idx].date);
    }
    if xs.len() < min_pairs {
        return Err(MetricsError::InsufficientPairs {
            ticker: aux.ticker.clone(),
            have: xs.len(),
            need: min_pairs,
        });
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateRegressor {
            ticker: aux.ticker.clone(),
        });
    }
    let beta = sxy / sxx;
    let alpha = y_mean - beta * x_mean;
    Ok(MispricingModel {
        alpha,
        beta,
        auxiliary_ticker: aux.ticker.clone(),
        fit_start: fit_start.expect("non-empty fit"),
        fit_end: fit_end.expect("non-empty fit"),
        n_pairs: xs.len(),
    })
}

/// Model prediction for the anchor bar of `series` that a decision made
/// with `visible_before` can see (the last bar strictly before it).
pub fn predicted_forward_return(
    series: &StockSeries,
    model: &MispricingModel,
    visible_before: NaiveDate,
) -> Option<f64> {
    let end = series.bars.partition_point(|b| b.date < visible_before);
    if end == 0 {
        return None;
    }
    let x = valuation_x(series, end - 1)?;
    Some(model.alpha + model.beta * x)
}

/// Decision-time mispricing gap: prediction minus the realized forward
/// return visible at decision time. The anchor is the newest visible bar,
/// so its forward window can never have completed; the realized term is
/// identically zero and the gap equals the prediction. Positive values mean
/// the model expects a higher return than observed so far (undervaluation,
/// pressure toward the fundamental style).
pub fn decision_gap(
    series: &StockSeries,
    model: &MispricingModel,
    visible_before: NaiveDate,
) -> Option<f64> {
    predicted_forward_return(series, model, visible_before).map(|yhat| yhat - 0.0)
}

/// Post-hoc mispricing gap at a specific anchor bar with full data: the
/// signed residual prediction minus realized forward return.
pub fn realized_gap(
    series: &StockSeries,
    model: &MispricingModel,
    idx: usize,
    forward_days: usize,
) -> Option<f64> {
    let x = valuation_x(series, idx)?;
    let y = realized_forward_return(series, idx, forward_days)?;
    Some(model.alpha + model.beta * x - y)
}

/// Why a switch event could not receive a MAS value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasExclusion {
    pub block_index: u32,
    pub start_date: NaiveDate,
    pub reason: String,
}

/// MAS event values per switch block: mean absolute prediction error over
/// the pool stocks at the block-start date, with per-block models refit on
/// the expanding window ending at that date.
///
/// A sector whose auxiliary series cannot support a model even on full data
/// is fatal. Per-block insufficiency (early blocks) or an incomplete
/// forward window (late blocks) excludes that event with a logged reason.
pub fn mas_event_values(
    records: &[BlockRecord],
    pool: &[&StockSeries],
    aux_by_sector: &BTreeMap<Sector, &StockSeries>,
    forward_days: usize,
    min_pairs: usize,
) -> Result<(BTreeMap<u32, f64>, Vec<MasExclusion>), MetricsError> {
    for stock in pool {
        let aux = aux_by_sector
            .get(&stock.sector)
            .ok_or_else(|| MetricsError::MissingSector(stock.sector.name().to_string()))?;
        let horizon = aux
            .bars
            .last()
            .map(|b| b.date + chrono::Days::new(1))
            .expect("validated non-empty series");
        fit_mispricing(aux, horizon, forward_days, min_pairs).map_err(|e| {
            MetricsError::SectorModel {
                sector: stock.sector.name().to_string(),
                source: Box::new(e),
            }
        })?;
    }

    // Scored switch events, deduplicated across agents (the event value
    // depends only on the block).
    let mut starts: BTreeMap<u32, NaiveDate> = BTreeMap::new();
    for r in records {
        if r.switch && r.block_index >= 2 {
            starts.insert(r.block_index, r.start_date);
        }
    }

    let mut values = BTreeMap::new();
    let mut exclusions = Vec::new();
    'blocks: for (&b, &start) in &starts {
        let mut models: BTreeMap<Sector, MispricingModel> = BTreeMap::new();
        for stock in pool {
            if models.contains_key(&stock.sector) {
                continue;
            }
            let aux = aux_by_sector[&stock.sector];
            match fit_mispricing(aux, start, forward_days, min_pairs) {
                Ok(m) => {
                    models.insert(stock.sector, m);
                }
                Err(e) => {
                    exclusions.push(MasExclusion {
                        block_index: b,
                        start_date: start,
                        reason: format!("sector model unavailable at block start: {e}"),
                    });
                    continue 'blocks;
                }
            }
        }
        let mut sum = 0.0;
        for stock in pool {
            let Some(idx) = stock.index_of(start) else {
                exclusions.push(MasExclusion {
                    block_index: b,
                    start_date: start,
                    reason: format!("{}: no bar at block start", stock.ticker),
                });
                continue 'blocks;
            };
            let Some(gap) = realized_gap(stock, &models[&stock.sector], idx, forward_days) else {
                let reason = if valuation_x(stock, idx).is_none() {
                    format!("{}: no usable filing or zero OCF at block start", stock.ticker)
                } else {
                    format!("{}: forward window incomplete", stock.ticker)
                };
                exclusions.push(MasExclusion {
                    block_index: b,
                    start_date: start,
                    reason,
                });
                continue 'blocks;
            };
            sum += gap.abs();
        }
        values.insert(b, sum / pool.len() as f64);
    }
    Ok((values, exclusions))
}

/// Loss-aversion score: over scored stay events, the mean clamped return
/// decline R_{t-1} - R_t (0 when returns did not worsen). 0 with no stays.
pub fn las(blocks: &[BlockRecord]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u32;
    for w in blocks.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        if cur.switch {
            continue;
        }
        n += 1;
        if cur.actual_return < prev.actual_return {
            sum += prev.actual_return - cur.actual_return;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Herding score: mean opposite-style population share over switch events.
pub fn has(blocks: &[BlockRecord]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u32;
    for w in blocks.windows(2) {
        let cur = &w[1];
        if cur.switch {
            sum += cur.population_share_other;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Wealth-advantage score: mean clamped counterfactual advantage
/// max(Rbar - R, 0) over switch events.
pub fn aas(blocks: &[BlockRecord]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u32;
    for w in blocks.windows(2) {
        let cur = &w[1];
        if cur.switch {
            let dr = cur.counterfactual_return - cur.actual_return;
            if dr > 0.0 {
                sum += dr;
            }
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mispricing score: signed sum of event values, positive for Tech->Fund
/// switches and negative for Fund->Tech. Events without a value (excluded
/// upstream) are skipped.
pub fn mas(blocks: &[BlockRecord], event_values: &BTreeMap<u32, f64>) -> f64 {
    let mut total = 0.0;
    for w in blocks.windows(2) {
        let cur = &w[1];
        if !cur.switch {
            continue;
        }
        let Some(v) = event_values.get(&cur.block_index) else {
            continue;
        };
        match cur.style {
            Style::Tech => total += v,
            Style::Fund => total -= v,
        }
    }
    total
}

/// One agent's score row, as emitted to scores.csv.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentScore {
    pub agent_id: u8,
    pub las: f64,
    pub has: f64,
    pub aas: f64,
    pub mas: f64,
    pub n_stay: u32,
    pub n_switch: u32,
}

impl AgentScore {
    pub fn metric(&self, driver: Driver) -> f64 {
        match driver {
            Driver::LossAversion => self.las,
            Driver::Herding => self.has,
            Driver::WealthDiff => self.aas,
            Driver::Mispricing => self.mas,
        }
    }
}

/// Group a run's block records by agent and compute all four scores.
/// Records must carry contiguous block indices per agent.
pub fn score_agents(
    records: &[BlockRecord],
    event_values: &BTreeMap<u32, f64>,
) -> Vec<AgentScore> {
    let mut by_agent: BTreeMap<u8, Vec<&BlockRecord>> = BTreeMap::new();
    for r in records {
        by_agent.entry(r.agent_id).or_default().push(r);
    }
    by_agent
        .into_iter()
        .map(|(agent_id, mut rs)| {
            rs.sort_by_key(|r| r.block_index);
            let owned: Vec<BlockRecord> = rs.into_iter().cloned().collect();
            let n_switch = owned.iter().skip(1).filter(|r| r.switch).count() as u32;
            let n_stay = owned.len().saturating_sub(1) as u32 - n_switch;
            AgentScore {
                agent_id,
                las: las(&owned),
                has: has(&owned),
                aas: aas(&owned),
                mas: mas(&owned, event_values),
                n_stay,
                n_switch,
            }
        })
        .collect()
}
