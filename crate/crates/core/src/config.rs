//! Run configuration: the TOML schema, validation, and data loading.
//!
//! A config file fully determines a run together with the seed it carries.
//! Validation is strict and front-loaded so a bad file fails before any
//! simulation work starts; the CLI maps `ConfigError` to exit code 2.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineParams, Mode};
use crate::indicators::IndicatorParams;
use crate::market_data::{DataError, DataSet, Sector, StockSeries};
use crate::policy::{LlmConfig, RuleThresholds, SwitchWeights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn d_block_length() -> usize {
    10
}
fn d_initial_wealth() -> f64 {
    100_000.0
}
fn d_buy_fraction() -> f64 {
    0.10
}
fn d_sell_fraction() -> f64 {
    1.0
}
fn d_warmup_days() -> usize {
    30
}
fn d_forward_days() -> usize {
    20
}
fn d_min_fit_pairs() -> usize {
    30
}

/// Core simulation window and sizing knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "d_block_length")]
    pub block_length: usize,
    #[serde(default = "d_initial_wealth")]
    pub initial_wealth: f64,
    #[serde(default = "d_buy_fraction")]
    pub buy_fraction: f64,
    #[serde(default = "d_sell_fraction")]
    pub sell_fraction: f64,
    #[serde(default = "d_warmup_days")]
    pub warmup_days: usize,
    #[serde(default = "d_forward_days")]
    pub forward_days: usize,
    #[serde(default = "d_min_fit_pairs")]
    pub min_fit_pairs: usize,
}

fn d_p_switch() -> f64 {
    0.1
}

/// Ablation-mode switching coin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationParams {
    pub p_switch: f64,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            p_switch: d_p_switch(),
        }
    }
}

/// The auxiliary ticker backing one pool stock's sector regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxEntry {
    pub ticker: String,
    pub prices: PathBuf,
    pub reports: PathBuf,
    pub shares_outstanding: f64,
}

/// One pool stock plus its sector auxiliary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StockEntry {
    pub ticker: String,
    pub sector: Sector,
    pub prices: PathBuf,
    pub reports: PathBuf,
    pub shares_outstanding: f64,
    #[serde(default)]
    pub aux: Option<AuxEntry>,
}

/// Complete run configuration as stored in config.toml.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub sim: SimParams,
    #[serde(default)]
    pub rule: RuleThresholds,
    #[serde(default)]
    pub switch: SwitchWeights,
    #[serde(default)]
    pub ablation: AblationParams,
    #[serde(default)]
    pub indicators: IndicatorParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmConfig>,
    pub stocks: Vec<StockEntry>,
}

impl RunConfig {
    /// Parse and validate a config file. Returns the config and the
    /// directory data paths resolve against (the file's parent).
    pub fn from_toml_path(path: &Path) -> Result<(RunConfig, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.stocks.len() != 5 {
            return bad(format!("expected exactly 5 pool stocks, found {}", self.stocks.len()));
        }
        let mut tickers = std::collections::BTreeSet::new();
        let mut sectors = std::collections::BTreeSet::new();
        for s in &self.stocks {
            if !tickers.insert(&s.ticker) {
                return bad(format!("duplicate pool ticker {}", s.ticker));
            }
            if !sectors.insert(s.sector) {
                return bad(format!("duplicate sector {} in pool", s.sector.name()));
            }
            if s.shares_outstanding <= 0.0 {
                return bad(format!("{}: shares_outstanding must be positive", s.ticker));
            }
            let Some(aux) = &s.aux else {
                return bad(format!("auxiliary ticker missing for {}", s.ticker));
            };
            if aux.ticker == s.ticker {
                return bad(format!("{}: auxiliary ticker must differ from the pool ticker", s.ticker));
            }
            if aux.shares_outstanding <= 0.0 {
                return bad(format!("{}: shares_outstanding must be positive", aux.ticker));
            }
        }
        if self.sim.start > self.sim.end {
            return bad(format!("sim.start {} is after sim.end {}", self.sim.start, self.sim.end));
        }
        if self.sim.block_length == 0 {
            return bad("sim.block_length must be at least 1".into());
        }
        if self.sim.initial_wealth <= 0.0 {
            return bad("sim.initial_wealth must be positive".into());
        }
        for (name, v) in [
            ("sim.buy_fraction", self.sim.buy_fraction),
            ("sim.sell_fraction", self.sim.sell_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if self.sim.warmup_days == 0 {
            return bad("sim.warmup_days must be at least 1".into());
        }
        if self.sim.forward_days == 0 {
            return bad("sim.forward_days must be at least 1".into());
        }
        if self.sim.min_fit_pairs < 2 {
            return bad("sim.min_fit_pairs must be at least 2".into());
        }
        if self.switch.tau < 0.0 || self.switch.jitter < 0.0 {
            return bad("switch.tau and switch.jitter must be non-negative".into());
        }
        if self.switch.jitter > 0.0 && self.switch.jitter >= self.switch.tau {
            return bad(format!(
                "switch.jitter ({}) must stay below switch.tau ({}) so trait-free agents never switch",
                self.switch.jitter, self.switch.tau
            ));
        }
        if !(0.0..=1.0).contains(&self.ablation.p_switch) {
            return bad(format!("ablation.p_switch must lie in [0, 1], got {}", self.ablation.p_switch));
        }
        if self.mode == Mode::Llm && self.llm.is_none() {
            return bad("mode is llm but the [llm] section is missing".into());
        }
        Ok(())
    }

    /// Load and cross-validate all price and report files.
    pub fn load_data(&self, base: &Path) -> Result<DataSet, ConfigError> {
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut pool = Vec::with_capacity(5);
        let mut aux = BTreeMap::new();
        for s in &self.stocks {
            pool.push(StockSeries::from_csv(
                &s.ticker,
                s.sector,
                s.shares_outstanding,
                &resolve(&s.prices),
                &resolve(&s.reports),
            )?);
            let a = s.aux.as_ref().expect("validated");
            aux.insert(
                s.sector,
                StockSeries::from_csv(
                    &a.ticker,
                    s.sector,
                    a.shares_outstanding,
                    &resolve(&a.prices),
                    &resolve(&a.reports),
                )?,
            );
        }
        Ok(DataSet::new(pool, aux)?)
    }

    pub fn engine_params(&self) -> EngineParams {
        EngineParams {
            seed: self.seed,
            start: self.sim.start,
            end: self.sim.end,
            block_length: self.sim.block_length,
            initial_wealth: self.sim.initial_wealth,
            buy_fraction: self.sim.buy_fraction,
            sell_fraction: self.sim.sell_fraction,
            warmup_days: self.sim.warmup_days,
            forward_days: self.sim.forward_days,
            min_fit_pairs: self.sim.min_fit_pairs,
            indicators: self.indicators.clone(),
        }
    }
}

/// Config matching a freshly written synthetic fixture directory (the file
/// naming of `synth::write_csv_fixture`).
pub fn fixture_config(data: &DataSet, seed: u64) -> RunConfig {
    let stocks = data
        .pool
        .iter()
        .map(|s| {
            let a = &data.aux[&s.sector];
            StockEntry {
                ticker: s.ticker.clone(),
                sector: s.sector,
                prices: PathBuf::from(format!("{}_prices.csv", s.ticker)),
                reports: PathBuf::from(format!("{}_reports.csv", s.ticker)),
                shares_outstanding: s.shares_outstanding,
                aux: Some(AuxEntry {
                    ticker: a.ticker.clone(),
                    prices: PathBuf::from(format!("{}_prices.csv", a.ticker)),
                    reports: PathBuf::from(format!("{}_reports.csv", a.ticker)),
                    shares_outstanding: a.shares_outstanding,
                }),
            }
        })
        .collect();
    let warmup = crate::synth::WARMUP_DAYS;
    RunConfig {
        seed,
        mode: Mode::Rule,
        sim: SimParams {
            start: data.calendar[warmup],
            end: *data.calendar.last().expect("non-empty calendar"),
            block_length: d_block_length(),
            initial_wealth: d_initial_wealth(),
            buy_fraction: d_buy_fraction(),
            sell_fraction: d_sell_fraction(),
            warmup_days: warmup,
            forward_days: d_forward_days(),
            min_fit_pairs: d_min_fit_pairs(),
        },
        rule: RuleThresholds::default(),
        switch: SwitchWeights::default(),
        ablation: AblationParams::default(),
        indicators: IndicatorParams::default(),
        llm: None,
        stocks,
    }
}
