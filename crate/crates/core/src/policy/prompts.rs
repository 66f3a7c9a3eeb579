//! Prompt templates and their rendering.
//!
//! Templates are reproduced verbatim from the study materials (including
//! their spelling and spacing quirks) and filled by simple `{slot}`
//! substitution. Unavailable indicator values render as the literal "NA".

use crate::agents::{Style, TraitVector};

use super::{SwitchContext, TickerView};

pub const PROMPT_TRADING_TECH: &str = include_str!("../resources/prompt_trading_technical.txt");
pub const PROMPT_TRADING_FUND: &str = include_str!("../resources/prompt_trading_fundamental.txt");
pub const PROMPT_SWITCHING: &str = include_str!("../resources/prompt_switching.txt");

/// Fixed-precision float rendering with trailing zeros trimmed, so prompts
/// stay byte-stable across runs.
fn fmt_num(x: f64) -> String {
    let mut s = format!("{x:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "NA".into())
}

/// Render the daily trading prompt for one ticker under the given style.
pub fn render_trading_prompt(style: Style, persona: &str, date: chrono::NaiveDate, view: &TickerView) -> String {
    // Return_1d is the fractional version of Pct_chg (which is in percent).
    let ret1d = fmt_opt(view.tech.pct_chg.map(|p| p / 100.0));
    let position = fmt_num(view.position_shares);
    match style {
        Style::Tech => PROMPT_TRADING_TECH
            .replace("{persona_prompt}", persona)
            .replace("{date}", &date.to_string())
            .replace("{price}", &fmt_opt(view.tech.close))
            .replace("{Pre_close_price}", &fmt_opt(view.tech.pre_close))
            .replace("{change}", &fmt_opt(view.tech.change))
            .replace("{pct_chg}", &fmt_opt(view.tech.pct_chg))
            .replace("{macd}", &fmt_opt(view.tech.macd))
            .replace("{macd_signal}", &fmt_opt(view.tech.macd_signal))
            .replace("{macd_hist}", &fmt_opt(view.tech.macd_hist))
            .replace("{vol}", &fmt_opt(view.tech.volatility_20))
            .replace("{volume_trend}", &fmt_opt(view.tech.volume_trend_20))
            .replace("{ret1d}", &ret1d)
            .replace("{position}", &position),
        Style::Fund => PROMPT_TRADING_FUND
            .replace("{persona_prompt}", persona)
            .replace("{date}", &date.to_string())
            .replace("{current_ratio}", &fmt_opt(view.fund.current_ratio))
            .replace("{leverage}", &fmt_opt(view.fund.leverage))
            .replace("{free_cash_flow}", &fmt_opt(view.fund.fcf))
            .replace("{fcf_to_capex}", &fmt_opt(view.fund.fcf_to_capex))
            .replace("{ret1d}", &ret1d)
            .replace("{position}", &position),
    }
}

fn alignment(b: bool) -> &'static str {
    if b {
        "aligned"
    } else {
        "not aligned"
    }
}

fn render_holdings(ctx: &SwitchContext) -> String {
    if ctx.holdings.is_empty() {
        return "none".into();
    }
    ctx.holdings
        .iter()
        .map(|h| {
            format!(
                "{} {} shares at {} (current_ratio {}, leverage {}, fcf {})",
                h.ticker,
                fmt_num(h.shares),
                fmt_num(h.price),
                fmt_opt(h.fund.current_ratio),
                fmt_opt(h.fund.leverage),
                fmt_opt(h.fund.fcf),
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Render the end-of-block style review prompt.
pub fn render_switch_prompt(traits: &TraitVector, ctx: &SwitchContext) -> String {
    PROMPT_SWITCHING
        .replace("{current_style}", ctx.current_style.name())
        .replace("{loss_alignment}", alignment(traits.loss_aversion))
        .replace("{herding_alignment}", alignment(traits.herding))
        .replace("{wealth_alignment}", alignment(traits.wealth_diff))
        .replace("{mispricing_alignment}", alignment(traits.mispricing))
        .replace("{holdings}", &render_holdings(ctx))
        .replace("{current_fund}", &fmt_num(ctx.cash))
        .replace("{opposite_profit}", &fmt_num(ctx.opposite_avg_profit))
        .replace("{num_current}", &ctx.n_current.to_string())
        .replace("{num_opposite}", &ctx.n_opposite.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::{FundSnapshot, TechSnapshot};
    use chrono::NaiveDate;

    fn full_view() -> TickerView {
        TickerView {
            ticker: "MSFT".into(),
            tech: TechSnapshot {
                close: Some(410.25),
                pre_close: Some(408.0),
                change: Some(2.25),
                pct_chg: Some(0.5514),
                ma_5: Some(409.0),
                ma_10: Some(407.0),
                ma_30: Some(400.0),
                vol_5: Some(1.0),
                vol_10: Some(1.0),
                vol_30: Some(1.0),
                macd: Some(1.25),
                macd_signal: Some(1.0),
                macd_hist: Some(0.25),
                rsi_14: Some(61.0),
                volatility_20: Some(1.1),
                volume_trend_20: Some(0.95),
            },
            fund: FundSnapshot {
                current_ratio: Some(1.25),
                leverage: Some(0.45),
                fcf: Some(2.1e10),
                fcf_to_capex: Some(2.5),
            },
            mispricing_gap: Some(0.01),
            position_shares: 24.375,
            hold_streak: 2,
        }
    }

    #[test]
    fn technical_prompt_fills_all_slots() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 11).unwrap();
        let p = render_trading_prompt(Style::Tech, "PERSONA", d, &full_view());
        assert!(!p.contains('{'), "unfilled slot in:\n{p}");
        assert!(p.contains("PERSONA"));
        assert!(p.contains("Date: 2024-01-11"));
        assert!(p.contains("Price: 410.25"));
        // The template's double space after the colon is preserved.
        assert!(p.contains("Pre_close_price:  408"));
        assert!(p.contains("MACD_Hist: 0.25"));
        // Return_1d is the fraction of the percent Pct_chg.
        assert!(p.contains("Pct_chg: 0.5514"));
        assert!(p.contains("Return_1d: 0.0055"));
        assert!(p.contains("Current_Position: 24.375"));
    }

    #[test]
    fn fundamental_prompt_and_na_rendering() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 16).unwrap();
        let mut v = full_view();
        v.fund.fcf_to_capex = None;
        v.tech.pct_chg = None;
        let p = render_trading_prompt(Style::Fund, "P", d, &v);
        assert!(!p.contains('{'));
        assert!(p.contains("Fundametal Indicator"));
        assert!(p.contains("CurrentRatio: 1.25"));
        assert!(p.contains("FCF_to_Capex: NA"));
        assert!(p.contains("Return_1d: NA"));
        assert!(p.contains("FreeCashFlow: 21000000000"));
    }

    #[test]
    fn switch_prompt_fills_all_slots() {
        let traits = TraitVector {
            loss_aversion: true,
            herding: false,
            wealth_diff: true,
            mispricing: false,
        };
        let ctx = SwitchContext {
            block_index: 5,
            current_style: Style::Fund,
            traits,
            actual_return: 0.01,
            counterfactual_return: 0.02,
            block_pnl: 1000.0,
            ytd_pnl: 2500.0,
            cash: 51234.5,
            holdings: vec![super::super::HoldingView {
                ticker: "ICE".into(),
                shares: 7.5,
                price: 140.0,
                fund: FundSnapshot {
                    current_ratio: Some(1.1),
                    leverage: Some(0.6),
                    fcf: Some(1.0e9),
                    fcf_to_capex: None,
                },
            }],
            opposite_avg_profit: 812.25,
            own_counterfactual_profit: 300.0,
            n_current: 7,
            n_opposite: 25,
            mean_abs_gap: 0.03,
            seed_draw: 0.4,
        };
        let p = render_switch_prompt(&traits, &ctx);
        assert!(!p.contains('{'), "unfilled slot in:\n{p}");
        assert!(p.contains("trading style: Fundamental"));
        assert!(p.contains("aligned with loss aversion"));
        assert!(p.contains("not aligned with herding"));
        assert!(p.contains("ICE 7.5 shares at 140"));
        assert!(p.contains("remaining funds of 51234.5"));
        assert!(p.contains("average profit of 812.25"));
        assert!(p.contains("7 agents follow your current style, while 25 agents"));
    }

    #[test]
    fn empty_holdings_render_as_none() {
        let traits = TraitVector {
            loss_aversion: false,
            herding: false,
            wealth_diff: false,
            mispricing: false,
        };
        let ctx = SwitchContext {
            block_index: 1,
            current_style: Style::Tech,
            traits,
            actual_return: 0.0,
            counterfactual_return: 0.0,
            block_pnl: 0.0,
            ytd_pnl: 0.0,
            cash: 100.0,
            holdings: Vec::new(),
            opposite_avg_profit: 0.0,
            own_counterfactual_profit: 0.0,
            n_current: 16,
            n_opposite: 16,
            mean_abs_gap: 0.0,
            seed_draw: 0.0,
        };
        let p = render_switch_prompt(&traits, &ctx);
        assert!(p.contains("as follows: none"));
    }

    #[test]
    fn number_trimming() {
        assert_eq!(fmt_num(1.5), "1.5");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(0.55140), "0.5514");
        assert_eq!(fmt_num(-0.00001), "0");
        assert_eq!(fmt_num(-1.25), "-1.25");
    }
}
