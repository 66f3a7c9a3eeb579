//! Deterministic rule policy and its ablation counterpart.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Style};

use super::{Action, DecisionContext, Policy, Side, SwitchContext, SwitchDecision, TickerView};

/// Thresholds of the per-style daily rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleThresholds {
    /// Relative band around ma_30 before the trend counts as up or down.
    pub ma_band: f64,
    pub current_ratio_min: f64,
    pub leverage_max: f64,
    /// Minimum positive mispricing gap (undervaluation) for a fundamental
    /// buy.
    pub buy_gap_min: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            ma_band: 0.002,
            current_ratio_min: 1.0,
            leverage_max: 0.9,
            buy_gap_min: 0.02,
        }
    }
}

/// Weights of the switch attractiveness score and its decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchWeights {
    pub w_wealth: f64,
    pub w_herding: f64,
    pub w_mispricing: f64,
    pub w_loss: f64,
    pub tau: f64,
    /// Jitter amplitude; the seed draw maps to a uniform offset in
    /// (-jitter, +jitter). Must stay below tau so trait-free agents never
    /// switch.
    pub jitter: f64,
}

impl Default for SwitchWeights {
    fn default() -> Self {
        Self {
            w_wealth: 1.0,
            w_herding: 0.5,
            w_mispricing: 0.5,
            w_loss: 0.6,
            tau: 0.01,
            jitter: 0.005,
        }
    }
}

/// Trait-conditioned rule policy. Daily actions depend only on the fields
/// of the active style; the block review scores switch attractiveness from
/// the trait bits.
#[derive(Debug, Clone, Default)]
pub struct RulePolicy {
    pub thresholds: RuleThresholds,
    pub weights: SwitchWeights,
}

impl RulePolicy {
    pub fn new(thresholds: RuleThresholds, weights: SwitchWeights) -> Self {
        Self { thresholds, weights }
    }

    fn decide_ticker(&self, style: Style, view: &TickerView) -> Action {
        let (side, reason) = match style {
            Style::Tech => self.technical_rule(view),
            Style::Fund => self.fundamental_rule(view),
        };
        Action {
            ticker: view.ticker.clone(),
            side,
            confidence: 1.0,
            reason,
        }
    }

    fn technical_rule(&self, view: &TickerView) -> (Side, String) {
        let t = &view.tech;
        let (Some(close), Some(ma_30), Some(hist)) = (t.close, t.ma_30, t.macd_hist) else {
            return (Side::Hold, "insufficient technical history".into());
        };
        let band = self.thresholds.ma_band;
        if close > ma_30 * (1.0 + band) && hist > 0.0 {
            (
                Side::Buy,
                format!("close {close:.2} above ma_30 band with macd_hist {hist:.4} > 0"),
            )
        } else if close < ma_30 * (1.0 - band) && hist < 0.0 {
            (
                Side::Sell,
                format!("close {close:.2} below ma_30 band with macd_hist {hist:.4} < 0"),
            )
        } else {
            (Side::Hold, "trend and momentum not aligned".into())
        }
    }

    fn fundamental_rule(&self, view: &TickerView) -> (Side, String) {
        let f = &view.fund;
        let th = &self.thresholds;
        // Distress conditions are an OR chain; any observable breach sells.
        if let Some(cr) = f.current_ratio {
            if cr < th.current_ratio_min {
                return (Side::Sell, format!("current_ratio {cr:.2} below {:.2}", th.current_ratio_min));
            }
        }
        if let Some(lev) = f.leverage {
            if lev > th.leverage_max {
                return (Side::Sell, format!("leverage {lev:.2} above {:.2}", th.leverage_max));
            }
        }
        if let Some(fcf) = f.fcf {
            if fcf < 0.0 {
                return (Side::Sell, format!("negative free cash flow {fcf:.0}"));
            }
        }
        let (Some(gap), Some(cr), Some(lev)) = (view.mispricing_gap, f.current_ratio, f.leverage)
        else {
            return (Side::Hold, "fundamental inputs incomplete".into());
        };
        if gap > th.buy_gap_min && cr >= th.current_ratio_min && lev <= th.leverage_max {
            (
                Side::Buy,
                format!("undervalued: mispricing gap {gap:.4} with sound balance sheet"),
            )
        } else {
            (Side::Hold, "no distress and no clear undervaluation".into())
        }
    }

    /// Attractiveness of switching away from the current style. Each trait
    /// bit gates one additive term; the loss-aversion term is a penalty
    /// active only after a losing block.
    pub fn attractiveness(&self, ctx: &SwitchContext) -> f64 {
        let w = &self.weights;
        let t = &ctx.traits;
        let mut a = 0.0;
        if t.wealth_diff {
            a += w.w_wealth * (ctx.counterfactual_return - ctx.actual_return).max(0.0);
        }
        if t.herding {
            a += w.w_herding * (ctx.n_opposite as f64 - ctx.n_current as f64) / 32.0;
        }
        if t.mispricing {
            // Undervaluation signals pull toward the fundamental style only.
            let pull = match ctx.current_style {
                Style::Tech => ctx.mean_abs_gap,
                Style::Fund => 0.0,
            };
            a += w.w_mispricing * pull;
        }
        if t.loss_aversion && ctx.actual_return < 0.0 {
            a -= w.w_loss;
        }
        a + (2.0 * ctx.seed_draw - 1.0) * w.jitter
    }
}

impl Policy for RulePolicy {
    fn decide_daily(&self, _agent: &AgentSpec, ctx: &DecisionContext) -> Vec<Action> {
        ctx.tickers
            .iter()
            .map(|view| self.decide_ticker(ctx.style, view))
            .collect()
    }

    fn decide_switch(&self, _agent: &AgentSpec, ctx: &SwitchContext) -> SwitchDecision {
        let a = self.attractiveness(ctx);
        let tau = self.weights.tau;
        SwitchDecision {
            switch: a >= tau,
            reason: format!(
                "attractiveness {a:.4} vs tau {tau:.4} (dR {:.4}, shares {}/{}, gap pull {:.4}, R {:.4})",
                ctx.counterfactual_return - ctx.actual_return,
                ctx.n_opposite,
                ctx.n_current,
                ctx.mean_abs_gap,
                ctx.actual_return,
            ),
        }
    }
}

/// Ablation policy: identical daily rules, but the review ignores traits
/// and flips a seed-derived coin.
#[derive(Debug, Clone)]
pub struct AblationPolicy {
    pub rule: RulePolicy,
    pub p_switch: f64,
}

impl AblationPolicy {
    pub fn new(rule: RulePolicy, p_switch: f64) -> Self {
        Self { rule, p_switch }
    }
}

impl Policy for AblationPolicy {
    fn decide_daily(&self, agent: &AgentSpec, ctx: &DecisionContext) -> Vec<Action> {
        self.rule.decide_daily(agent, ctx)
    }

    fn decide_switch(&self, _agent: &AgentSpec, ctx: &SwitchContext) -> SwitchDecision {
        let switch = ctx.seed_draw < self.p_switch;
        SwitchDecision {
            switch,
            reason: format!(
                "ablation coin: draw {:.4} vs p {:.4}",
                ctx.seed_draw, self.p_switch
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{build_population, TraitVector};
    use crate::indicators::{FundSnapshot, TechSnapshot};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn view(ticker: &str) -> TickerView {
        TickerView {
            ticker: ticker.into(),
            tech: TechSnapshot::default(),
            fund: FundSnapshot::default(),
            mispricing_gap: None,
            position_shares: 0.0,
            hold_streak: 0,
        }
    }

    fn tech_view(close: f64, ma_30: f64, hist: f64) -> TickerView {
        let mut v = view("T");
        v.tech.close = Some(close);
        v.tech.ma_30 = Some(ma_30);
        v.tech.macd_hist = Some(hist);
        v
    }

    fn fund_view(cr: Option<f64>, lev: Option<f64>, fcf: Option<f64>, gap: Option<f64>) -> TickerView {
        let mut v = view("F");
        v.fund.current_ratio = cr;
        v.fund.leverage = lev;
        v.fund.fcf = fcf;
        v.mispricing_gap = gap;
        v
    }

    fn ctx_with(views: Vec<TickerView>, style: Style) -> DecisionContext {
        DecisionContext {
            date: NaiveDate::from_ymd_opt(2024, 6, 3).unwrap(),
            style,
            cash: 50_000.0,
            tickers: views,
        }
    }

    fn switch_ctx(traits: TraitVector, style: Style) -> SwitchContext {
        SwitchContext {
            block_index: 3,
            current_style: style,
            traits,
            actual_return: 0.0,
            counterfactual_return: 0.0,
            block_pnl: 0.0,
            ytd_pnl: 0.0,
            cash: 50_000.0,
            holdings: Vec::new(),
            opposite_avg_profit: 0.0,
            own_counterfactual_profit: 0.0,
            n_current: 16,
            n_opposite: 16,
            mean_abs_gap: 0.0,
            seed_draw: 0.5,
        }
    }

    #[test]
    fn technical_rule_table() {
        let p = RulePolicy::default();
        let agent = &build_population()[0];
        // Buy: close above the band with positive histogram.
        let c = ctx_with(vec![tech_view(101.0, 100.0, 0.5)], Style::Tech);
        assert_eq!(p.decide_daily(agent, &c)[0].side, Side::Buy);
        // Sell: below the band with negative histogram.
        let c = ctx_with(vec![tech_view(99.0, 100.0, -0.5)], Style::Tech);
        assert_eq!(p.decide_daily(agent, &c)[0].side, Side::Sell);
        // Inside the band, or momentum disagreeing, holds.
        let c = ctx_with(vec![tech_view(100.1, 100.0, 0.5)], Style::Tech);
        assert_eq!(p.decide_daily(agent, &c)[0].side, Side::Hold);
        let c = ctx_with(vec![tech_view(101.0, 100.0, -0.5)], Style::Tech);
        assert_eq!(p.decide_daily(agent, &c)[0].side, Side::Hold);
        // Missing indicator holds.
        let mut v = tech_view(101.0, 100.0, 0.5);
        v.tech.macd_hist = None;
        let c = ctx_with(vec![v], Style::Tech);
        assert_eq!(p.decide_daily(agent, &c)[0].side, Side::Hold);
        assert_eq!(p.decide_daily(agent, &c)[0].confidence, 1.0);
    }

    #[test]
    fn fundamental_rule_table() {
        let p = RulePolicy::default();
        let agent = &build_population()[16];
        let cases = [
            (fund_view(Some(0.86), Some(0.5), Some(10.0), None), Side::Sell),
            (fund_view(Some(1.5), Some(0.98), Some(10.0), None), Side::Sell),
            (fund_view(Some(1.5), Some(0.5), Some(-5.0), None), Side::Sell),
            // Undervalued with a sound balance sheet buys.
            (fund_view(Some(1.5), Some(0.5), Some(10.0), Some(0.05)), Side::Buy),
            // Gap below threshold holds.
            (fund_view(Some(1.5), Some(0.5), Some(10.0), Some(0.01)), Side::Hold),
            // Overvalued (negative gap) holds rather than buys.
            (fund_view(Some(1.5), Some(0.5), Some(10.0), Some(-0.05)), Side::Hold),
            // Missing gap holds.
            (fund_view(Some(1.5), Some(0.5), Some(10.0), None), Side::Hold),
            // A breach visible through NA elsewhere still sells.
            (fund_view(None, Some(0.98), None, None), Side::Sell),
        ];
        for (v, want) in cases {
            let c = ctx_with(vec![v], Style::Fund);
            assert_eq!(p.decide_daily(agent, &c)[0].side, want);
        }
    }

    #[test]
    fn style_conditioning_is_invariant_to_other_style_fields() {
        let p = RulePolicy::default();
        let pop = build_population();
        // A technical decision must not move when fundamental fields change.
        let base = tech_view(101.0, 100.0, 0.5);
        let mut perturbed = base.clone();
        perturbed.fund = FundSnapshot {
            current_ratio: Some(0.1),
            leverage: Some(0.99),
            fcf: Some(-1e9),
            fcf_to_capex: Some(-3.0),
        };
        perturbed.mispricing_gap = Some(9.9);
        let a = p.decide_daily(&pop[0], &ctx_with(vec![base], Style::Tech));
        let b = p.decide_daily(&pop[0], &ctx_with(vec![perturbed], Style::Tech));
        assert_eq!(a, b);

        // And a fundamental decision ignores technical fields.
        let base = fund_view(Some(1.5), Some(0.5), Some(10.0), Some(0.05));
        let mut perturbed = base.clone();
        perturbed.tech.close = Some(1.0);
        perturbed.tech.ma_30 = Some(100.0);
        perturbed.tech.macd_hist = Some(-9.0);
        perturbed.tech.rsi_14 = Some(99.0);
        let a = p.decide_daily(&pop[16], &ctx_with(vec![base], Style::Fund));
        let b = p.decide_daily(&pop[16], &ctx_with(vec![perturbed], Style::Fund));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trait_agent_never_switches() {
        let p = RulePolicy::default();
        let agent = &build_population()[0];
        let traits = TraitVector {
            loss_aversion: false,
            herding: false,
            wealth_diff: false,
            mispricing: false,
        };
        // Any draw leaves |jitter| < tau, so the decision is stay.
        for draw in [0.0, 0.25, 0.5, 0.75, 0.999_999] {
            let mut c = switch_ctx(traits, Style::Tech);
            c.seed_draw = draw;
            c.counterfactual_return = 0.0;
            c.actual_return = 0.0;
            assert!(!p.decide_switch(agent, &c).switch, "draw {draw}");
        }
    }

    #[test]
    fn wealth_term_triggers_switch() {
        let p = RulePolicy::default();
        let agent = &build_population()[4];
        let traits = TraitVector {
            loss_aversion: false,
            herding: false,
            wealth_diff: true,
            mispricing: false,
        };
        let mut c = switch_ctx(traits, Style::Tech);
        c.counterfactual_return = 0.05;
        c.actual_return = 0.0;
        assert!(p.decide_switch(agent, &c).switch);
        // The clamp ignores a counterfactual that did worse.
        c.counterfactual_return = -0.05;
        assert!(!p.decide_switch(agent, &c).switch);
    }

    #[test]
    fn loss_gate_suppresses_marginal_switch() {
        let p = RulePolicy::default();
        let agent = &build_population()[5];
        let traits = TraitVector {
            loss_aversion: true,
            herding: false,
            wealth_diff: true,
            mispricing: false,
        };
        let mut c = switch_ctx(traits, Style::Tech);
        // Wealth term alone clears tau, but the block lost money.
        c.counterfactual_return = 0.02;
        c.actual_return = -0.01;
        assert!(!p.decide_switch(agent, &c).switch);
        // Same advantage after a winning block switches.
        c.actual_return = 0.01;
        c.counterfactual_return = 0.03;
        assert!(p.decide_switch(agent, &c).switch);
    }

    #[test]
    fn herding_term_follows_majority() {
        let p = RulePolicy::default();
        let agent = &build_population()[2];
        let traits = TraitVector {
            loss_aversion: false,
            herding: true,
            wealth_diff: false,
            mispricing: false,
        };
        let mut c = switch_ctx(traits, Style::Tech);
        c.n_current = 10;
        c.n_opposite = 22;
        // 0.5 * 12/32 = 0.1875 >= tau.
        assert!(p.decide_switch(agent, &c).switch);
        // In the majority the term is negative.
        c.n_current = 22;
        c.n_opposite = 10;
        assert!(!p.decide_switch(agent, &c).switch);
    }

    #[test]
    fn mispricing_pull_is_tech_only() {
        let p = RulePolicy::default();
        let agent = &build_population()[8];
        let traits = TraitVector {
            loss_aversion: false,
            herding: false,
            wealth_diff: false,
            mispricing: true,
        };
        let mut c = switch_ctx(traits, Style::Tech);
        c.mean_abs_gap = 0.10;
        // 0.5 * 0.10 = 0.05 >= tau: undervaluation pulls toward Fund.
        assert!(p.decide_switch(agent, &c).switch);
        // The same signal never pushes a fundamental agent back.
        let mut c = switch_ctx(traits, Style::Fund);
        c.mean_abs_gap = 0.10;
        assert!(!p.decide_switch(agent, &c).switch);
    }

    #[test]
    fn ablation_coin() {
        let p = AblationPolicy::new(RulePolicy::default(), 0.1);
        let agent = &build_population()[0];
        let traits = TraitVector {
            loss_aversion: true,
            herding: true,
            wealth_diff: true,
            mispricing: true,
        };
        let mut c = switch_ctx(traits, Style::Tech);
        c.seed_draw = 0.05;
        assert!(p.decide_switch(agent, &c).switch);
        c.seed_draw = 0.10;
        assert!(!p.decide_switch(agent, &c).switch);
        // Strong traits do not move the coin.
        c.counterfactual_return = 1.0;
        c.actual_return = -1.0;
        assert!(!p.decide_switch(agent, &c).switch);
    }

    proptest! {
        #[test]
        fn herding_bit_monotone_in_minority(
            draw in 0.0..1.0f64,
            n_cur in 1u32..16,
            dr in -0.2..0.2f64,
        ) {
            // Adding the herding bit never reduces attractiveness while in
            // the minority.
            let p = RulePolicy::default();
            let mut base = switch_ctx(TraitVector {
                loss_aversion: false, herding: false, wealth_diff: true, mispricing: false,
            }, Style::Tech);
            base.seed_draw = draw;
            base.n_current = n_cur;
            base.n_opposite = 32 - n_cur;
            base.counterfactual_return = dr;
            let mut with_h = base.clone();
            with_h.traits.herding = true;
            prop_assert!(p.attractiveness(&with_h) >= p.attractiveness(&base));
        }

        #[test]
        fn loss_bit_never_raises_after_loss(
            draw in 0.0..1.0f64,
            r in -0.2..0.0f64,
            dr in 0.0..0.2f64,
        ) {
            let p = RulePolicy::default();
            let mut base = switch_ctx(TraitVector {
                loss_aversion: false, herding: true, wealth_diff: true, mispricing: true,
            }, Style::Tech);
            base.seed_draw = draw;
            base.actual_return = r;
            base.counterfactual_return = r + dr;
            let mut with_l = base.clone();
            with_l.traits.loss_aversion = true;
            prop_assert!(p.attractiveness(&with_l) <= p.attractiveness(&base));
        }

        #[test]
        fn jitter_stays_inside_tau(draw in 0.0..1.0f64) {
            let w = SwitchWeights::default();
            let jitter = (2.0 * draw - 1.0) * w.jitter;
            prop_assert!(jitter.abs() < w.tau);
        }
    }
}
