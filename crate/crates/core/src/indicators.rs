//! Technical and fundamental feature snapshots.
//!
//! Every feature is value-or-NA (`Option<f64>`): a window feature is NA until
//! its window is fully populated, never a partial-window estimate. The exact
//! arithmetic is part of the contract so that independent recomputation
//! reproduces values bit-for-bit:
//!
//! - means are left-to-right sums divided by the count;
//! - EMA(n) is seeded with the simple mean of the first n values, then
//!   follows ema = alpha*x + (1 - alpha)*ema with alpha = 2/(n+1);
//! - RSI uses Wilder smoothing: seed averages of the first `period` gains
//!   and losses, then avg = (avg*(period-1) + current)/period; a zero
//!   average loss yields RSI = 100 by convention;
//! - volatility is the sample standard deviation (n-1 denominator) of the
//!   trailing percent changes, two-pass (mean, then squared deviations).

use serde::{Deserialize, Serialize};

use crate::market_data::{DailyBar, QuarterlyReport};

/// Indicator window parameters. Defaults follow the standard MACD(12,26,9),
/// RSI(14), and 20-day volatility/volume-trend conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorParams {
    pub ema_fast: usize,
    pub ema_slow: usize,
    pub macd_signal: usize,
    pub rsi_period: usize,
    pub volatility_window: usize,
    pub volume_trend_window: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        IndicatorParams {
            ema_fast: 12,
            ema_slow: 26,
            macd_signal: 9,
            rsi_period: 14,
            volatility_window: 20,
            volume_trend_window: 20,
        }
    }
}

/// Point-in-time technical view of one ticker. Computed from the bars
/// visible at the decision day; the newest visible bar is "today" here.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TechSnapshot {
    pub close: Option<f64>,
    pub pre_close: Option<f64>,
    pub change: Option<f64>,
    /// Percent change of close, in percent (2.0 means +2%).
    pub pct_chg: Option<f64>,
    pub ma_5: Option<f64>,
    pub ma_10: Option<f64>,
    pub ma_30: Option<f64>,
    pub vol_5: Option<f64>,
    pub vol_10: Option<f64>,
    pub vol_30: Option<f64>,
    pub macd: Option<f64>,
    pub macd_signal: Option<f64>,
    pub macd_hist: Option<f64>,
    pub rsi_14: Option<f64>,
    pub volatility_20: Option<f64>,
    pub volume_trend_20: Option<f64>,
}

/// Point-in-time fundamental view from the latest visible filing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FundSnapshot {
    pub current_ratio: Option<f64>,
    pub leverage: Option<f64>,
    pub fcf: Option<f64>,
    pub fcf_to_capex: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// EMA series: None before the seed window fills, seed = simple mean of the
/// first n values, then the standard recurrence.
pub fn ema_series(values: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if n == 0 || values.len() < n {
        return out;
    }
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut e = mean(&values[..n]);
    out[n - 1] = Some(e);
    for i in n..values.len() {
        e = alpha * values[i] + (1.0 - alpha) * e;
        out[i] = Some(e);
    }
    out
}

fn trailing_mean(values: &[f64], n: usize) -> Option<f64> {
    if n == 0 || values.len() < n {
        None
    } else {
        Some(mean(&values[values.len() - n..]))
    }
}

/// Compute the technical snapshot over visible history (oldest first).
pub fn tech_snapshot(history: &[DailyBar], p: &IndicatorParams) -> TechSnapshot {
    let mut s = TechSnapshot::default();
    let t = history.len();
    if t == 0 {
        return s;
    }
    let closes: Vec<f64> = history.iter().map(|b| b.close).collect();
    let volumes: Vec<f64> = history.iter().map(|b| b.volume).collect();

    s.close = Some(closes[t - 1]);
    if t >= 2 {
        let prev = closes[t - 2];
        s.pre_close = Some(prev);
        s.change = Some(closes[t - 1] - prev);
        s.pct_chg = Some(100.0 * (closes[t - 1] - prev) / prev);
    }

    s.ma_5 = trailing_mean(&closes, 5);
    s.ma_10 = trailing_mean(&closes, 10);
    s.ma_30 = trailing_mean(&closes, 30);
    s.vol_5 = trailing_mean(&volumes, 5);
    s.vol_10 = trailing_mean(&volumes, 10);
    s.vol_30 = trailing_mean(&volumes, 30);

    // MACD line and its signal EMA. The signal is an EMA over the MACD
    // series itself, so it needs ema_slow + macd_signal - 1 bars.
    let fast = ema_series(&closes, p.ema_fast);
    let slow = ema_series(&closes, p.ema_slow);
    if t >= p.ema_slow && p.ema_fast <= p.ema_slow {
        let macd_vals: Vec<f64> = (p.ema_slow - 1..t)
            .map(|i| fast[i].unwrap() - slow[i].unwrap())
            .collect();
        s.macd = macd_vals.last().copied();
        let sig = ema_series(&macd_vals, p.macd_signal);
        if let Some(Some(sv)) = sig.last() {
            s.macd_signal = Some(*sv);
            s.macd_hist = Some(s.macd.unwrap() - sv);
        }
    }

    // Wilder RSI over close-to-close differences.
    if t >= p.rsi_period + 1 {
        let period = p.rsi_period;
        let mut gains = Vec::with_capacity(t - 1);
        let mut losses = Vec::with_capacity(t - 1);
        for i in 1..t {
            let d = closes[i] - closes[i - 1];
            gains.push(if d > 0.0 { d } else { 0.0 });
            losses.push(if d < 0.0 { -d } else { 0.0 });
        }
        let mut avg_gain = mean(&gains[..period]);
        let mut avg_loss = mean(&losses[..period]);
        for i in period..gains.len() {
            avg_gain = (avg_gain * (period as f64 - 1.0) + gains[i]) / period as f64;
            avg_loss = (avg_loss * (period as f64 - 1.0) + losses[i]) / period as f64;
        }
        s.rsi_14 = Some(if avg_loss == 0.0 {
            100.0
        } else {
            100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
        });
    }

    // Sample std of the trailing percent changes; needs window + 1 closes.
    if t >= p.volatility_window + 1 && p.volatility_window >= 2 {
        let w = p.volatility_window;
        let pct: Vec<f64> = (t - w..t)
            .map(|i| 100.0 * (closes[i] - closes[i - 1]) / closes[i - 1])
            .collect();
        let mu = mean(&pct);
        let mut ss = 0.0;
        for x in &pct {
            let d = x - mu;
            ss += d * d;
        }
        s.volatility_20 = Some((ss / (w as f64 - 1.0)).sqrt());
    }

    if t >= p.volume_trend_window && p.volume_trend_window >= 1 {
        let m = trailing_mean(&volumes, p.volume_trend_window).unwrap();
        s.volume_trend_20 = Some(volumes[t - 1] / m);
    }

    s
}

/// Compute the fundamental snapshot from the latest visible filing.
/// No filing yet means every field is NA. A zero current-liabilities
/// denominator gives NA rather than infinity; fcf_to_capex requires
/// strictly positive capex.
pub fn fund_snapshot(report: Option<&QuarterlyReport>) -> FundSnapshot {
    let Some(r) = report else {
        return FundSnapshot::default();
    };
    let fcf = r.ocf - r.capex;
    FundSnapshot {
        current_ratio: if r.liabilities_current > 0.0 {
            Some(r.assets_current / r.liabilities_current)
        } else {
            None
        },
        leverage: Some(r.liabilities / r.assets),
        fcf: Some(fcf),
        fcf_to_capex: if r.capex > 0.0 { Some(fcf / r.capex) } else { None },
    }
}
