//! LLM-backed policy speaking the chat-completions wire format.
//!
//! Each per-ticker decision is one request: the agent's persona text as the
//! system message and the rendered style prompt as the user message. The
//! model must answer with a single JSON object; transport failures and
//! schema-invalid replies both consume retries with exponential backoff.
//! When the budget is exhausted the agent degrades to Hold (or stays, for
//! the style review) and the error is carried in the decision's reason.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentSpec;

use super::prompts::{render_switch_prompt, render_trading_prompt};
use super::{Action, DecisionContext, Policy, Side, SwitchContext, SwitchDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key; an empty
    /// value sends no Authorization header (local mock servers).
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    /// Retries after the first attempt; 2 means up to 3 requests.
    pub retry_budget: u32,
    pub backoff_base_ms: u64,
    /// Concurrent requests within one agent-day decision.
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "STYLESIM_API_KEY".into(),
            temperature: 0.0,
            timeout_ms: 30_000,
            retry_budget: 2,
            backoff_base_ms: 250,
            max_in_flight: 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("schema: {msg} (raw: {raw})")]
    Schema { msg: String, raw: String },
    #[error("retry budget exhausted after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: String },
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct DailyReply {
    side: String,
    confidence: f64,
    reason: String,
}

#[derive(Deserialize)]
struct SwitchReply {
    switch: bool,
    reason: String,
}

/// Drop a surrounding markdown code fence, if any.
fn strip_fences(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = match rest.split_once('\n') {
        Some((_lang, body)) => body,
        None => rest,
    };
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn parse_daily(content: &str) -> Result<(Side, f64, String), String> {
    let cleaned = strip_fences(content);
    let reply: DailyReply =
        serde_json::from_str(cleaned).map_err(|e| format!("invalid JSON: {e}"))?;
    let side = match reply.side.to_ascii_uppercase().as_str() {
        "BUY" => Side::Buy,
        "SELL" => Side::Sell,
        "HOLD" => Side::Hold,
        other => return Err(format!("unknown side {other:?}")),
    };
    if !reply.confidence.is_finite() || !(0.0..=1.0).contains(&reply.confidence) {
        return Err(format!("confidence {} outside [0, 1]", reply.confidence));
    }
    Ok((side, reply.confidence, reply.reason))
}

fn parse_switch(content: &str) -> Result<(bool, String), String> {
    let cleaned = strip_fences(content);
    let reply: SwitchReply =
        serde_json::from_str(cleaned).map_err(|e| format!("invalid JSON: {e}"))?;
    Ok((reply.switch, reply.reason))
}

pub struct LlmPolicy {
    cfg: LlmConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl LlmPolicy {
    /// Build the policy, reading the API key from the configured
    /// environment variable (absent or empty means unauthenticated).
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let api_key = if cfg.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty())
        };
        Ok(Self { cfg, client, api_key })
    }

    fn request_once(&self, system: &str, user: &str) -> Result<String, String> {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: [
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
            temperature: self.cfg.temperature,
        };
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| format!("send: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| format!("body: {e}"))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "empty choices".to_string())
    }

    /// One logical completion with retries; `parse` validates the reply
    /// schema and its failure also consumes a retry.
    fn complete<T>(
        &self,
        system: &str,
        user: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, LlmError> {
        let attempts = self.cfg.retry_budget + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.request_once(system, user) {
                Ok(content) => match parse(&content) {
                    Ok(v) => return Ok(v),
                    Err(e) => last = format!("schema: {e}"),
                },
                Err(e) => last = format!("transport: {e}"),
            }
        }
        Err(LlmError::Exhausted { attempts, last })
    }
}

impl Policy for LlmPolicy {
    fn decide_daily(&self, agent: &AgentSpec, ctx: &DecisionContext) -> Vec<Action> {
        let chunk = self.cfg.max_in_flight.max(1);
        let mut actions = Vec::with_capacity(ctx.tickers.len());
        for views in ctx.tickers.chunks(chunk) {
            // Fan out one bounded chunk; replies are joined and applied in
            // ticker order regardless of completion order.
            let results: Vec<Action> = std::thread::scope(|scope| {
                let handles: Vec<_> = views
                    .iter()
                    .map(|view| {
                        scope.spawn(move || {
                            let prompt =
                                render_trading_prompt(ctx.style, &agent.persona_text, ctx.date, view);
                            match self.complete(&agent.persona_text, &prompt, parse_daily) {
                                Ok((side, confidence, reason)) => Action {
                                    ticker: view.ticker.clone(),
                                    side,
                                    confidence,
                                    reason,
                                },
                                Err(e) => Action {
                                    ticker: view.ticker.clone(),
                                    side: Side::Hold,
                                    confidence: 0.0,
                                    reason: format!("llm fallback: {e}"),
                                },
                            }
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("llm worker")).collect()
            });
            actions.extend(results);
        }
        actions
    }

    fn decide_switch(&self, agent: &AgentSpec, ctx: &SwitchContext) -> SwitchDecision {
        let prompt = render_switch_prompt(&ctx.traits, ctx);
        match self.complete(&agent.persona_text, &prompt, parse_switch) {
            Ok((switch, reason)) => SwitchDecision { switch, reason },
            Err(e) => SwitchDecision {
                switch: false,
                reason: format!("llm fallback: {e}"),
            },
        }
    }
}


#[cfg(test)]
mod tests {
    use super::mock::MockServer;
    use super::*;
    use crate::agents::{build_population, Style, TraitVector};
    use crate::indicators::{FundSnapshot, TechSnapshot};
    use chrono::NaiveDate;

    fn test_cfg(url: &str, retries: u32) -> LlmConfig {
        LlmConfig {
            endpoint: url.into(),
            api_key_env: String::new(),
            timeout_ms: 5_000,
            retry_budget: retries,
            backoff_base_ms: 1,
            max_in_flight: 1,
            ..LlmConfig::default()
        }
    }

    fn one_ticker_ctx() -> DecisionContext {
        DecisionContext {
            date: NaiveDate::from_ymd_opt(2024, 1, 11).unwrap(),
            style: Style::Tech,
            cash: 50_000.0,
            tickers: vec![super::super::TickerView {
                ticker: "MSFT".into(),
                tech: TechSnapshot {
                    close: Some(400.0),
                    ..TechSnapshot::default()
                },
                fund: FundSnapshot::default(),
                mispricing_gap: None,
                position_shares: 10.0,
                hold_streak: 0,
            }],
        }
    }

    #[test]
    fn parses_reply_variants() {
        let (side, conf, _) =
            parse_daily(r#"{"side": "SELL", "confidence": 0.85, "reason": "overbought"}"#).unwrap();
        assert_eq!(side, Side::Sell);
        assert_eq!(conf, 0.85);
        // Fenced and lower-case variants are accepted.
        let fenced = "```json\n{\"side\": \"buy\", \"confidence\": 0.6, \"reason\": \"x\"}\n```";
        assert_eq!(parse_daily(fenced).unwrap().0, Side::Buy);
        assert!(parse_daily("not json").is_err());
        assert!(parse_daily(r#"{"side": "YOLO", "confidence": 0.5, "reason": "x"}"#).is_err());
        assert!(parse_daily(r#"{"side": "BUY", "confidence": 1.5, "reason": "x"}"#).is_err());
        assert!(parse_switch(r#"{"switch": true, "reason": "better returns"}"#).unwrap().0);
    }

    #[test]
    fn valid_reply_executes() {
        let server = MockServer::start(vec![(
            200,
            r#"{"side": "SELL", "confidence": 0.85, "reason": "RSI extreme"}"#.into(),
        )]);
        let policy = LlmPolicy::new(test_cfg(&server.url, 0)).unwrap();
        let pop = build_population();
        let actions = policy.decide_daily(&pop[0], &one_ticker_ctx());
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].side, Side::Sell);
        assert_eq!(actions[0].confidence, 0.85);
        assert_eq!(server.hits(), 1);
    }

    #[test]
    fn malformed_then_valid_consumes_one_retry() {
        let server = MockServer::start(vec![
            (200, "garbage, not a json object".into()),
            (200, r#"{"side": "BUY", "confidence": 0.7, "reason": "ok"}"#.into()),
        ]);
        let policy = LlmPolicy::new(test_cfg(&server.url, 2)).unwrap();
        let pop = build_population();
        let actions = policy.decide_daily(&pop[0], &one_ticker_ctx());
        assert_eq!(actions[0].side, Side::Buy);
        assert_eq!(server.hits(), 2, "exactly one retry");
    }

    #[test]
    fn exhaustion_degrades_to_hold_with_reason() {
        let server = MockServer::start(vec![
            (500, "irrelevant".into()),
            (200, "still not json".into()),
        ]);
        let policy = LlmPolicy::new(test_cfg(&server.url, 1)).unwrap();
        let pop = build_population();
        let actions = policy.decide_daily(&pop[0], &one_ticker_ctx());
        assert_eq!(actions[0].side, Side::Hold);
        assert_eq!(actions[0].confidence, 0.0);
        assert!(
            actions[0].reason.starts_with("llm fallback:"),
            "reason: {}",
            actions[0].reason
        );
        assert_eq!(server.hits(), 2, "budget of 1 retry = 2 requests");
    }

    #[test]
    fn switch_fallback_stays() {
        let server = MockServer::start(vec![(200, "{broken".into())]);
        let policy = LlmPolicy::new(test_cfg(&server.url, 0)).unwrap();
        let pop = build_population();
        let ctx = SwitchContext {
            block_index: 2,
            current_style: Style::Tech,
            traits: TraitVector {
                loss_aversion: false,
                herding: false,
                wealth_diff: false,
                mispricing: false,
            },
            actual_return: 0.0,
            counterfactual_return: 0.0,
            block_pnl: 0.0,
            ytd_pnl: 0.0,
            cash: 0.0,
            holdings: Vec::new(),
            opposite_avg_profit: 0.0,
            own_counterfactual_profit: 0.0,
            n_current: 16,
            n_opposite: 16,
            mean_abs_gap: 0.0,
            seed_draw: 0.0,
        };
        let dec = policy.decide_switch(&pop[0], &ctx);
        assert!(!dec.switch);
        assert!(dec.reason.starts_with("llm fallback:"));
    }
}
