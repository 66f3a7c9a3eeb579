//! Output artifacts: JSONL logs, scores.csv, report.json, report.md, and
//! the run manifest.
//!
//! trades.jsonl, blocks.jsonl, and report.json are byte-reproducible for a
//! given config and seed: serialization order is struct declaration order,
//! maps are sorted, and no timestamps appear in them. The manifest is the
//! only artifact carrying wall-clock data.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Mode, RunLog};
use crate::metrics::{AgentScore, MasExclusion};
use crate::stats::DriverTest;

pub const TRADES_FILE: &str = "trades.jsonl";
pub const BLOCKS_FILE: &str = "blocks.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_other<E: std::error::Error + Send + Sync + 'static>(e: E) -> std::io::Error {
    std::io::Error::other(e)
}

/// One serialized row per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, r).map_err(io_other)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(line)
            .map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_scores_csv(path: &Path, scores: &[AgentScore]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_other)?;
    for s in scores {
        w.serialize(s).map_err(io_other)?;
    }
    w.flush()
}

/// report.json: a map from driver key to its full-precision test result.
pub fn write_report_json(path: &Path, tests: &[DriverTest]) -> std::io::Result<()> {
    let map: BTreeMap<&'static str, &DriverTest> =
        tests.iter().map(|t| (t.driver.key(), t)).collect();
    let text = serde_json::to_string_pretty(&map).map_err(io_other)?;
    std::fs::write(path, text + "\n")
}

/// p-value rendering used by the summary tables: at least two decimals,
/// enough to reach the first significant digit of small values, trailing
/// zeros trimmed down to two decimals.
pub fn format_p(p: f64) -> String {
    let p = p.clamp(1e-300, 1.0);
    let decimals = (1 - p.log10().floor() as i32).max(2) as usize;
    let mut s = format!("{p:.decimals$}");
    let mut kept = decimals;
    while kept > 2 && s.ends_with('0') {
        s.pop();
        kept -= 1;
    }
    s
}

/// Human-readable summary table: U to one decimal, effects to two,
/// p via `format_p`. Machine precision lives in report.json.
pub fn render_report_md(
    tests: &[DriverTest],
    exclusions: &[MasExclusion],
    n_events: (u32, u32),
) -> String {
    let mut md = String::new();
    md.push_str("# Behavioral alignment report\n\n");
    md.push_str(&format!(
        "Scored events per agent population: {} stays, {} switches.\n\n",
        n_events.0, n_events.1
    ));
    md.push_str("| Psychological Driver | Metric | U | p | r_b | c_d | CLES |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for t in tests {
        md.push_str(&format!(
            "| {} | {} | {:.1} | {} | {:.2} | {:.2} | {:.2} |\n",
            t.driver.label(),
            t.metric,
            t.result.u,
            format_p(t.result.p),
            t.result.r_rb,
            t.result.cliff_delta,
            t.result.cles,
        ));
    }
    md.push_str("\nPairwise counts per driver (W/L/T over n_A x n_B):\n\n");
    for t in tests {
        md.push_str(&format!(
            "- {}: W={} L={} T={} (n_A={}, n_B={}){}\n",
            t.driver.label(),
            t.result.wins,
            t.result.losses,
            t.result.ties,
            t.result.n_a,
            t.result.n_b,
            if t.result.degenerate {
                "; degenerate (all pooled scores tied)"
            } else {
                ""
            },
        ));
    }
    if !exclusions.is_empty() {
        md.push_str("\n## Excluded switch events\n\n");
        for e in exclusions {
            md.push_str(&format!(
                "- block {} (start {}): {}\n",
                e.block_index, e.start_date, e.reason
            ));
        }
    }
    md
}

/// Provenance stamp for one output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_sha256: String,
    /// Digest per input data file, keyed by file name.
    pub data_sha256: BTreeMap<String, String>,
    pub created_utc: String,
    pub n_days: usize,
    pub n_blocks: usize,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_bytes(&std::fs::read(path)?))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let mut hex = String::with_capacity(64);
    for b in h.finalize() {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Everything written by a full run, in one place.
pub struct RunArtifacts<'a> {
    pub log: &'a RunLog,
    pub scores: &'a [AgentScore],
    pub tests: &'a [DriverTest],
    pub exclusions: &'a [MasExclusion],
}

/// Write the five analysis artifacts (the manifest is written separately by
/// the caller, which knows the input paths).
pub fn write_run_outputs(dir: &Path, a: &RunArtifacts<'_>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(TRADES_FILE), &a.log.trades)?;
    write_jsonl(&dir.join(BLOCKS_FILE), &a.log.blocks)?;
    write_scores_csv(&dir.join(SCORES_FILE), a.scores)?;
    write_report_json(&dir.join(REPORT_JSON_FILE), a.tests)?;
    let stays: u32 = a.scores.iter().map(|s| s.n_stay).sum();
    let switches: u32 = a.scores.iter().map(|s| s.n_switch).sum();
    std::fs::write(
        dir.join(REPORT_MD_FILE),
        render_report_md(a.tests, a.exclusions, (stays, switches)),
    )
}

/// Paths of the analysis artifacts inside an output directory.
pub fn artifact_paths(dir: &Path) -> Vec<PathBuf> {
    [TRADES_FILE, BLOCKS_FILE, SCORES_FILE, REPORT_JSON_FILE, REPORT_MD_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MwuResult;

    #[test]
    fn p_formatting_matches_table_style() {
        let cases = [
            (0.0003, "0.0003"),
            (0.002, "0.002"),
            (0.016, "0.016"),
            (0.04, "0.04"),
            (0.15, "0.15"),
            (0.33, "0.33"),
            (0.5, "0.50"),
            (0.09, "0.09"),
            (1.0, "1.00"),
            (0.0000007, "0.0000007"),
        ];
        for (p, want) in cases {
            assert_eq!(format_p(p), want, "p = {p}");
        }
    }

    fn fake_tests() -> Vec<DriverTest> {
        use crate::agents::Driver;
        Driver::ALL
            .iter()
            .map(|&driver| DriverTest {
                driver,
                metric: driver.metric_key().to_string(),
                result: MwuResult {
                    u: 214.0,
                    p: 0.0003,
                    r_rb: 0.671875,
                    cliff_delta: 0.671875,
                    cles: 0.8359375,
                    wins: 172,
                    losses: 0,
                    ties: 84,
                    n_a: 16,
                    n_b: 16,
                    degenerate: false,
                },
            })
            .collect()
    }

    #[test]
    fn report_md_shape() {
        let md = render_report_md(&fake_tests(), &[], (600, 168));
        assert!(md.contains("| Loss Aversion | las | 214.0 | 0.0003 | 0.67 | 0.67 | 0.84 |"));
        assert!(md.contains("| Price Misalignment | mas |"));
        assert!(md.contains("600 stays, 168 switches"));
        assert!(!md.contains("Excluded switch events"));
    }

    #[test]
    fn report_json_is_keyed_by_driver() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REPORT_JSON_FILE);
        write_report_json(&path, &fake_tests()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["loss_aversion", "herding", "wealth_diff", "mispricing"] {
            let d = &v[key];
            for field in ["U", "p", "r_rb", "cliff_delta", "cles", "W", "L", "T", "n_A", "n_B", "degenerate"] {
                assert!(!d[field].is_null(), "{key}.{field} missing");
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let rows: Vec<AgentScore> = (0..4)
            .map(|i| AgentScore {
                agent_id: i,
                las: 0.1 * i as f64,
                has: 0.0,
                aas: 0.0,
                mas: -0.5,
                n_stay: 20,
                n_switch: 4,
            })
            .collect();
        write_jsonl(&path, &rows).unwrap();
        let back: Vec<AgentScore> = read_jsonl(&path).unwrap();
        assert_eq!(rows, back);
        // Truncated/garbled lines surface as schema errors.
        std::fs::write(&path, "{\"agent_id\": 1, \"las\"").unwrap();
        assert!(read_jsonl::<AgentScore>(&path).is_err());
    }

    #[test]
    fn scores_csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SCORES_FILE);
        write_scores_csv(
            &path,
            &[AgentScore {
                agent_id: 3,
                las: 0.015,
                has: 0.6875,
                aas: 0.0,
                mas: 0.05,
                n_stay: 20,
                n_switch: 4,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "agent_id,las,has,aas,mas,n_stay,n_switch"
        );
        assert_eq!(lines.next().unwrap(), "3,0.015,0.6875,0.0,0.05,20,4");
    }
}
