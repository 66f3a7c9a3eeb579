//! `stylesim` command-line front end.
//!
//! Three subcommands:
//!
//! - `run`: simulate a configured market year and write the full artifact set
//!   (trades.jsonl, blocks.jsonl, scores.csv, report.json, report.md,
//!   manifest.json) into `--out`.
//! - `evaluate`: recompute scores.csv, report.json, and report.md from an
//!   existing blocks.jsonl without re-simulating. Running it on a fresh run
//!   directory is a fixed point.
//! - `gen-data`: write the seeded synthetic five-stock fixture plus a ready
//!   config.toml, so `run` works out of the box.
//!
//! Exit codes: 0 success, 2 config error, 3 evaluate input schema mismatch,
//! 1 anything else. Errors are a single `error: ...` line on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stylesim_core::config::{fixture_config, ConfigError};
use stylesim_core::engine::{run_simulation, EngineError, Mode, RunLog};
use stylesim_core::market_data::{DataError, DataSet, Sector, StockSeries};
use stylesim_core::metrics::{mas_event_values, score_agents, MasExclusion, MetricsError};
use stylesim_core::policy::{AblationPolicy, LlmError, LlmPolicy, Policy, RulePolicy};
use stylesim_core::report::{
    self, format_p, Manifest, RunArtifacts, BLOCKS_FILE, MANIFEST_FILE, REPORT_JSON_FILE,
    REPORT_MD_FILE, SCORES_FILE,
};
use stylesim_core::stats::{run_battery, DriverTest, StatsError};
use stylesim_core::{AgentScore, BlockRecord, RunConfig, TOOL_VERSION};

#[derive(Parser)]
#[command(name = "stylesim", version = TOOL_VERSION, about = "Agent-based style-switching market simulator and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full simulation and write all artifacts to the output directory.
    Run(RunArgs),
    /// Recompute scores and statistics from an existing run's blocks.jsonl.
    Evaluate(EvaluateArgs),
    /// Generate the synthetic five-stock fixture and a matching config.toml.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the configured decision mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Path to the run configuration (TOML); supplies data paths and
    /// evaluation parameters.
    #[arg(long)]
    config: PathBuf,
    /// Directory holding blocks.jsonl from a prior run; scores.csv,
    /// report.json, and report.md are rewritten in place.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    /// Directory to write the CSV fixture and config.toml into.
    #[arg(long)]
    out: PathBuf,
    /// Fixture seed; also becomes the seed in the generated config.
    #[arg(long, default_value_t = 32)]
    seed: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// Error carrying its process exit code.
struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(2, e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::GenData(args) => cmd_gen_data(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Keep errors single-line so callers can match on them.
            let flat: String = e.msg.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: {flat}");
            ExitCode::from(e.code)
        }
    }
}

/// Shared evaluation pipeline: block records + market data in, scores,
/// driver tests, and logged exclusions out.
fn evaluate_records(
    records: &[BlockRecord],
    data: &DataSet,
    forward_days: usize,
    min_fit_pairs: usize,
) -> Result<(Vec<AgentScore>, Vec<DriverTest>, Vec<MasExclusion>), CliError> {
    let pool: Vec<&StockSeries> = data.pool.iter().collect();
    let aux: BTreeMap<Sector, &StockSeries> = data.aux.iter().map(|(s, v)| (*s, v)).collect();
    let (values, exclusions) = mas_event_values(records, &pool, &aux, forward_days, min_fit_pairs)?;
    let scores = score_agents(records, &values);
    let tests = run_battery(&scores)?;
    Ok((scores, tests, exclusions))
}

fn print_test_summary(tests: &[DriverTest]) {
    for t in tests {
        println!(
            "{}: U={:.1} p={} r_rb={:.2} cliff_delta={:.2} cles={:.2}",
            t.driver.key(),
            t.result.u,
            format_p(t.result.p),
            t.result.r_rb,
            t.result.cliff_delta,
            t.result.cles,
        );
    }
}

/// Digest every input data file, keyed by the path string the config uses.
fn data_digests(cfg: &RunConfig, base: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut out = BTreeMap::new();
    for s in &cfg.stocks {
        let mut files = vec![&s.prices, &s.reports];
        if let Some(a) = &s.aux {
            files.push(&a.prices);
            files.push(&a.reports);
        }
        for p in files {
            out.insert(p.display().to_string(), report::sha256_file(&resolve(p))?);
        }
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (mut cfg, base) = RunConfig::from_toml_path(&args.config)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    // Overrides can change what is required (llm mode needs [llm]).
    cfg.validate()?;

    let data = cfg.load_data(&base)?;
    let params = cfg.engine_params();
    let rule = RulePolicy::new(cfg.rule, cfg.switch);
    let llm;
    let ablation;
    let policy: &dyn Policy = match cfg.mode {
        Mode::Rule => &rule,
        Mode::Ablation => {
            ablation = AblationPolicy::new(rule.clone(), cfg.ablation.p_switch);
            &ablation
        }
        Mode::Llm => {
            let llm_cfg = cfg.llm.clone().expect("validate() requires [llm] in llm mode");
            llm = LlmPolicy::new(llm_cfg)?;
            &llm
        }
    };

    let log: RunLog = run_simulation(&params, &data, policy)?;
    let (scores, tests, exclusions) =
        evaluate_records(&log.blocks, &data, cfg.sim.forward_days, cfg.sim.min_fit_pairs)?;

    report::write_run_outputs(
        &args.out,
        &RunArtifacts {
            log: &log,
            scores: &scores,
            tests: &tests,
            exclusions: &exclusions,
        },
    )?;
    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        config_sha256: report::sha256_file(&args.config)?,
        data_sha256: data_digests(&cfg, &base)?,
        created_utc: chrono::Utc::now().to_rfc3339(),
        n_days: log.n_days,
        n_blocks: log.n_blocks,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::new(1, e.to_string()))?;
    std::fs::write(args.out.join(MANIFEST_FILE), manifest_json + "\n")?;

    println!(
        "run complete: {} days, {} blocks, {} trades, {} events",
        log.n_days,
        log.n_blocks,
        log.trades.len(),
        log.events.len()
    );
    print_test_summary(&tests);
    println!("wrote 6 artifacts to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let (cfg, base) = RunConfig::from_toml_path(&args.config)?;
    let blocks_path = args.out.join(BLOCKS_FILE);
    let records: Vec<BlockRecord> =
        report::read_jsonl(&blocks_path).map_err(|msg| CliError::new(3, msg))?;
    if records.is_empty() {
        return Err(CliError::new(
            3,
            format!("{}: contains no block records", blocks_path.display()),
        ));
    }
    let data = cfg.load_data(&base)?;
    let (scores, tests, exclusions) =
        evaluate_records(&records, &data, cfg.sim.forward_days, cfg.sim.min_fit_pairs)?;

    report::write_scores_csv(&args.out.join(SCORES_FILE), &scores)?;
    report::write_report_json(&args.out.join(REPORT_JSON_FILE), &tests)?;
    let stays: u32 = scores.iter().map(|s| s.n_stay).sum();
    let switches: u32 = scores.iter().map(|s| s.n_switch).sum();
    std::fs::write(
        args.out.join(REPORT_MD_FILE),
        report::render_report_md(&tests, &exclusions, (stays, switches)),
    )?;

    println!(
        "evaluated {} block records ({} agents)",
        records.len(),
        scores.len()
    );
    print_test_summary(&tests);
    println!("rewrote scores.csv, report.json, report.md in {}", args.out.display());
    Ok(())
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let data = stylesim_core::synth::write_csv_fixture(&args.out, args.seed)?;
    let cfg = fixture_config(&data, args.seed);
    let text = toml::to_string_pretty(&cfg).map_err(|e| CliError::new(1, e.to_string()))?;
    std::fs::write(args.out.join("config.toml"), text)?;
    println!(
        "wrote fixture for {} tickers ({} trading days) and config.toml to {}",
        data.pool.len() + data.aux.len(),
        data.calendar.len(),
        args.out.display()
    );
    Ok(())
}
