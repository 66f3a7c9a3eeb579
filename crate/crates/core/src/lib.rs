//! Deterministic agent-based market simulator with trait-conditioned style
//! switching, plus the evaluation toolkit that scores behavioral alignment.
//!
//! The crate is organized bottom-up:
//!
//! - [`market_data`]: CSV ingest, point-in-time views over bars and filings
//! - [`indicators`]: technical and fundamental feature snapshots
//! - [`agents`]: the 32-agent factorial population and persona texts
//! - [`ledger`]: cash/position accounting for actual and counterfactual books
//! - [`policy`]: rule, ablation, and LLM decision policies
//! - [`engine`]: the daily loop, block reviews, and run logs
//! - [`metrics`]: LAS/HAS/AAS/MAS scores and the mispricing regression
//! - [`stats`]: one-sided Mann-Whitney U, effect sizes, exact oracle
//! - [`config`]: run configuration and validation
//! - [`report`]: JSON/Markdown reporting of the alignment battery
//! - [`synth`]: seeded synthetic fixture generator
//!
//! Everything downstream of a seed is deterministic: same config + seed gives
//! byte-identical logs and reports.

pub mod agents;
pub mod config;
pub mod engine;
pub mod indicators;
pub mod ledger;
pub mod market_data;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod stats;
pub mod synth;

pub use agents::{build_population, AgentSpec, Driver, Style, TraitVector};
pub use config::RunConfig;
pub use engine::{run_simulation, BlockRecord, Mode, RunLog};
pub use market_data::{DailyBar, QuarterlyReport, Sector, StockSeries};
pub use metrics::AgentScore;
pub use stats::{mann_whitney_greater, MwuResult};

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
