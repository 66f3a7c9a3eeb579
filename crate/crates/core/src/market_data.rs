//! Price bars and quarterly filings, with point-in-time access rules.
//!
//! The ingest is strict: malformed rows, out-of-order dates, and violated
//! price invariants are load-time errors, never silently repaired. All
//! decision-time accessors take the decision day t and expose only data
//! knowable before t: bars strictly before t, filings whose filing_date is
//! strictly before t.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} row {row}: {msg}")]
    Row { path: String, row: usize, msg: String },
    #[error("{ticker}: price file has no rows")]
    NoBars { ticker: String },
    #[error("{ticker}: dates must be strictly increasing, violated at {date}")]
    DateOrder { ticker: String, date: NaiveDate },
    #[error("{ticker} {date}: {msg}")]
    BarInvariant {
        ticker: String,
        date: NaiveDate,
        msg: String,
    },
    #[error("{ticker} report ending {period_end}: {msg}")]
    ReportInvariant {
        ticker: String,
        period_end: NaiveDate,
        msg: String,
    },
    #[error("data gap: {ticker} is missing calendar day {date}")]
    CalendarGap { ticker: String, date: NaiveDate },
}

/// One trading day of split-adjusted OHLCV data plus cash distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    /// Cash dividend per share going ex on this date (0 when none).
    pub dividend: f64,
    /// Split ratio applied on this date (1 when none).
    pub split_ratio: f64,
}

/// One quarterly filing. Fields become visible only after `filing_date`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyReport {
    pub period_end: NaiveDate,
    pub filing_date: NaiveDate,
    pub assets: f64,
    pub liabilities: f64,
    pub assets_current: f64,
    pub liabilities_current: f64,
    /// Net operating cash flow for the quarter.
    pub ocf: f64,
    /// Payments to acquire property, plant, and equipment.
    pub capex: f64,
}

/// GICS-style sector labels for the five-stock pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "Information Technology")]
    InformationTechnology,
    #[serde(rename = "Financials")]
    Financials,
    #[serde(rename = "Health Care")]
    HealthCare,
    #[serde(rename = "Industrials")]
    Industrials,
    #[serde(rename = "Consumer Staples")]
    ConsumerStaples,
}

impl Sector {
    pub const ALL: [Sector; 5] = [
        Sector::InformationTechnology,
        Sector::Financials,
        Sector::HealthCare,
        Sector::Industrials,
        Sector::ConsumerStaples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sector::InformationTechnology => "Information Technology",
            Sector::Financials => "Financials",
            Sector::HealthCare => "Health Care",
            Sector::Industrials => "Industrials",
            Sector::ConsumerStaples => "Consumer Staples",
        }
    }
}

/// Full history for one ticker: ordered bars, ordered filings, share count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSeries {
    pub ticker: String,
    pub sector: Sector,
    pub shares_outstanding: f64,
    pub bars: Vec<DailyBar>,
    pub reports: Vec<QuarterlyReport>,
}

impl StockSeries {
    /// Load and validate one ticker from price and report CSV files.
    pub fn from_csv(
        ticker: &str,
        sector: Sector,
        shares_outstanding: f64,
        prices: &Path,
        reports: &Path,
    ) -> Result<StockSeries, DataError> {
        let bars = load_bars(ticker, prices)?;
        let reps = load_reports(ticker, reports)?;
        Ok(StockSeries {
            ticker: ticker.to_string(),
            sector,
            shares_outstanding,
            bars,
            reports: reps,
        })
    }

    /// Bars knowable when deciding on day t: every bar dated strictly
    /// before t. Over trading days this is exactly "dated <= t-1".
    pub fn bars_asof(&self, t: NaiveDate) -> &[DailyBar] {
        let end = self.bars.partition_point(|b| b.date < t);
        &self.bars[..end]
    }

    /// Latest filing visible when deciding on day t: greatest filing_date
    /// strictly before t (a report filed on t itself is not yet usable).
    /// Filing-date ties resolve to the later period_end.
    pub fn latest_report(&self, t: NaiveDate) -> Option<&QuarterlyReport> {
        self.reports
            .iter()
            .filter(|r| r.filing_date < t)
            .max_by_key(|r| (r.filing_date, r.period_end))
    }

    /// Index of the bar dated exactly `date`, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.bars
            .binary_search_by_key(&date, |b| b.date)
            .ok()
    }
}

fn load_bars(ticker: &str, path: &Path) -> Result<Vec<DailyBar>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, 0, e))?;
    let mut bars: Vec<DailyBar> = Vec::new();
    for (i, rec) in rdr.deserialize::<DailyBar>().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let bar = rec.map_err(|e| csv_err(path, row, e))?;
        validate_bar(ticker, &bar)?;
        if let Some(prev) = bars.last() {
            if bar.date <= prev.date {
                return Err(DataError::DateOrder {
                    ticker: ticker.to_string(),
                    date: bar.date,
                });
            }
        }
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(DataError::NoBars {
            ticker: ticker.to_string(),
        });
    }
    Ok(bars)
}

fn validate_bar(ticker: &str, b: &DailyBar) -> Result<(), DataError> {
    let err = |msg: String| DataError::BarInvariant {
        ticker: ticker.to_string(),
        date: b.date,
        msg,
    };
    for (name, v) in [
        ("open", b.open),
        ("high", b.high),
        ("low", b.low),
        ("close", b.close),
        ("volume", b.volume),
        ("dividend", b.dividend),
        ("split_ratio", b.split_ratio),
    ] {
        if !v.is_finite() {
            return Err(err(format!("{name} is not finite")));
        }
    }
    if b.low <= 0.0 {
        return Err(err("prices must be positive".into()));
    }
    if b.low > b.open || b.low > b.close || b.high < b.open || b.high < b.close {
        return Err(err(format!(
            "OHLC out of range: open {} high {} low {} close {}",
            b.open, b.high, b.low, b.close
        )));
    }
    if b.volume < 0.0 {
        return Err(err("volume must be non-negative".into()));
    }
    if b.dividend < 0.0 {
        return Err(err("dividend must be non-negative".into()));
    }
    if b.split_ratio <= 0.0 {
        return Err(err("split_ratio must be positive".into()));
    }
    Ok(())
}

fn load_reports(ticker: &str, path: &Path) -> Result<Vec<QuarterlyReport>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, 0, e))?;
    let mut reps: Vec<QuarterlyReport> = Vec::new();
    for (i, rec) in rdr.deserialize::<QuarterlyReport>().enumerate() {
        let row = i + 2;
        let rep = rec.map_err(|e| csv_err(path, row, e))?;
        validate_report(ticker, &rep)?;
        if let Some(prev) = reps.last() {
            if rep.period_end <= prev.period_end {
                return Err(DataError::ReportInvariant {
                    ticker: ticker.to_string(),
                    period_end: rep.period_end,
                    msg: "period_end must be strictly increasing".into(),
                });
            }
        }
        reps.push(rep);
    }
    Ok(reps)
}

fn validate_report(ticker: &str, r: &QuarterlyReport) -> Result<(), DataError> {
    let err = |msg: String| DataError::ReportInvariant {
        ticker: ticker.to_string(),
        period_end: r.period_end,
        msg,
    };
    for (name, v) in [
        ("assets", r.assets),
        ("liabilities", r.liabilities),
        ("assets_current", r.assets_current),
        ("liabilities_current", r.liabilities_current),
        ("ocf", r.ocf),
        ("capex", r.capex),
    ] {
        if !v.is_finite() {
            return Err(err(format!("{name} is not finite")));
        }
    }
    if r.filing_date < r.period_end {
        return Err(err("filing_date precedes period_end".into()));
    }
    if r.assets <= 0.0 {
        return Err(err("assets must be positive".into()));
    }
    if r.liabilities < 0.0 || r.assets_current < 0.0 || r.liabilities_current < 0.0 {
        return Err(err("balance-sheet aggregates must be non-negative".into()));
    }
    Ok(())
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> DataError {
    DataError::Row {
        path: path.display().to_string(),
        row,
        msg: e.to_string(),
    }
}

/// Shared trading calendar across series: every ticker must carry a bar on
/// every date any ticker trades. Returns the common date vector; the first
/// hole found is a fatal gap naming the ticker and date.
pub fn shared_calendar(series: &[&StockSeries]) -> Result<Vec<NaiveDate>, DataError> {
    let mut union: Vec<NaiveDate> = Vec::new();
    for s in series {
        for b in &s.bars {
            union.push(b.date);
        }
    }
    union.sort_unstable();
    union.dedup();
    for s in series {
        let mut i = 0;
        for &d in &union {
            if i >= s.bars.len() || s.bars[i].date != d {
                return Err(DataError::CalendarGap {
                    ticker: s.ticker.clone(),
                    date: d,
                });
            }
            i += 1;
        }
    }
    Ok(union)
}

/// Loaded market universe: the tradable pool in configured order, one
/// auxiliary series per pool sector for the mispricing regression, and the
/// calendar every series shares (bar index == calendar index everywhere).
#[derive(Debug, Clone)]
pub struct DataSet {
    pub pool: Vec<StockSeries>,
    pub aux: std::collections::BTreeMap<Sector, StockSeries>,
    pub calendar: Vec<NaiveDate>,
}

impl DataSet {
    /// Assemble and cross-validate a universe from loaded series.
    pub fn new(
        pool: Vec<StockSeries>,
        aux: std::collections::BTreeMap<Sector, StockSeries>,
    ) -> Result<DataSet, DataError> {
        let mut all: Vec<&StockSeries> = pool.iter().collect();
        all.extend(aux.values());
        let calendar = shared_calendar(&all)?;
        Ok(DataSet { pool, aux, calendar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    const PRICES: &str = "\
date,open,high,low,close,volume,dividend,split_ratio
2024-01-02,100.0,102.0,99.0,101.0,1000,0.0,1.0
2024-01-03,101.0,103.0,100.5,102.5,1100,0.25,1.0
2024-01-04,102.5,104.0,101.0,101.5,900,0.0,1.0
";

    const REPORTS: &str = "\
period_end,filing_date,assets,liabilities,assets_current,liabilities_current,ocf,capex
2023-09-30,2023-11-01,1000,400,300,150,80,30
2023-12-31,2024-01-03,1050,420,310,160,90,35
";

    #[test]
    fn loads_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "p.csv", PRICES);
        let r = write_file(&dir, "r.csv", REPORTS);
        let s = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap();
        assert_eq!(s.bars.len(), 3);
        assert_eq!(s.reports.len(), 2);
        assert_eq!(s.bars[1].dividend, 0.25);
    }

    #[test]
    fn bars_asof_excludes_decision_day() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "p.csv", PRICES);
        let r = write_file(&dir, "r.csv", REPORTS);
        let s = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap();
        let visible = s.bars_asof(date("2024-01-04"));
        assert_eq!(visible.len(), 2);
        assert_eq!(visible.last().unwrap().date, date("2024-01-03"));
        assert!(s.bars_asof(date("2024-01-02")).is_empty());
    }

    #[test]
    fn filing_becomes_visible_the_day_after() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "p.csv", PRICES);
        let r = write_file(&dir, "r.csv", REPORTS);
        let s = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap();
        // On the filing date itself only the previous report is visible.
        let on_filing = s.latest_report(date("2024-01-03")).unwrap();
        assert_eq!(on_filing.period_end, date("2023-09-30"));
        // One day later the new filing is visible.
        let after = s.latest_report(date("2024-01-04")).unwrap();
        assert_eq!(after.period_end, date("2023-12-31"));
        // Before any filing: nothing.
        assert!(s.latest_report(date("2023-11-01")).is_none());
    }

    #[test]
    fn rejects_out_of_order_dates() {
        let dir = tempfile::tempdir().unwrap();
        let bad = "\
date,open,high,low,close,volume,dividend,split_ratio
2024-01-03,101.0,103.0,100.5,102.5,1100,0.0,1.0
2024-01-02,100.0,102.0,99.0,101.0,1000,0.0,1.0
";
        let p = write_file(&dir, "p.csv", bad);
        let r = write_file(&dir, "r.csv", REPORTS);
        let e = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap_err();
        assert!(matches!(e, DataError::DateOrder { .. }));
    }

    #[test]
    fn rejects_ohlc_violation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = "\
date,open,high,low,close,volume,dividend,split_ratio
2024-01-02,100.0,99.5,99.0,101.0,1000,0.0,1.0
";
        let p = write_file(&dir, "p.csv", bad);
        let r = write_file(&dir, "r.csv", REPORTS);
        let e = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap_err();
        assert!(matches!(e, DataError::BarInvariant { .. }));
    }

    #[test]
    fn rejects_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let bad = "\
date,open,high,low,close,volume
2024-01-02,100.0,102.0,99.0,101.0,1000
";
        let p = write_file(&dir, "p.csv", bad);
        let r = write_file(&dir, "r.csv", REPORTS);
        let e = StockSeries::from_csv("TST", Sector::Financials, 1e9, &p, &r).unwrap_err();
        assert!(matches!(e, DataError::Row { .. }));
    }

    #[test]
    fn shared_calendar_detects_gap() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = write_file(&dir, "p1.csv", PRICES);
        let short = "\
date,open,high,low,close,volume,dividend,split_ratio
2024-01-02,50.0,51.0,49.0,50.5,500,0.0,1.0
2024-01-04,50.5,52.0,50.0,51.5,600,0.0,1.0
";
        let p2 = write_file(&dir, "p2.csv", short);
        let r = write_file(&dir, "r.csv", REPORTS);
        let a = StockSeries::from_csv("AAA", Sector::Financials, 1e9, &p1, &r).unwrap();
        let b = StockSeries::from_csv("BBB", Sector::HealthCare, 1e9, &p2, &r).unwrap();
        let e = shared_calendar(&[&a, &b]).unwrap_err();
        match e {
            DataError::CalendarGap { ticker, date } => {
                assert_eq!(ticker, "BBB");
                assert_eq!(date, super::tests::date("2024-01-03"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        let cal = shared_calendar(&[&a]).unwrap();
        assert_eq!(cal.len(), 3);
    }
}
