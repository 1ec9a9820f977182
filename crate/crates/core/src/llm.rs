//! OpenAI-compatible chat-completions client, shared by program
//! generation, the answer-equivalence judge, and rationale conversion.
//!
//! Speaks `POST {base_url}/v1/chat/completions`; consumes per-token
//! log-probs when the server returns them. Transient faults (transport,
//! 429, 5xx) are retried once.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{JudgeError, LlmJudge};
use crate::tools::NetworkGate;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}")]
    Status(u16),
    #[error("response schema: {0}")]
    Schema(String),
    #[error("offline mode forbids llm access")]
    Offline,
    #[error("bad config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    /// E.g. "http://localhost:8000"; "/v1/chat/completions" is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; empty for none.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Ask the server for per-token log-probs (ignored by servers that do
    /// not support them).
    #[serde(default = "default_true")]
    pub request_logprobs: bool,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_true() -> bool {
    true
}

/// One returned completion.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmChoice {
    pub text: String,
    /// Sum of token log-probs when the server provides them.
    pub sum_logprob: Option<f64>,
}

pub struct LlmClient {
    config: LlmConfig,
    client: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        if config.base_url.is_empty() || config.model.is_empty() {
            return Err(LlmError::BadConfig(
                "base_url and model must be set".to_string(),
            ));
        }
        NetworkGate::check_construction().map_err(|_| LlmError::Offline)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    /// Request `n` completions at the given temperature; one retry on
    /// transient faults.
    pub fn complete(
        &self,
        prompt: &str,
        n: usize,
        temperature: f64,
    ) -> Result<Vec<LlmChoice>, LlmError> {
        match self.complete_once(prompt, n, temperature) {
            Err(err) if is_transient(&err) => {
                log::debug!("llm request failed transiently ({err}); retrying once");
                self.complete_once(prompt, n, temperature)
            }
            other => other,
        }
    }

    fn complete_once(
        &self,
        prompt: &str,
        n: usize,
        temperature: f64,
    ) -> Result<Vec<LlmChoice>, LlmError> {
        NetworkGate::register_attempt().map_err(|_| LlmError::Offline)?;
        let url = format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut payload = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": temperature,
            "n": n,
        });
        if self.config.request_logprobs {
            payload["logprobs"] = serde_json::json!(true);
        }
        let mut request = self.client.post(&url).json(&payload);
        if !self.config.api_key_env.is_empty() {
            if let Ok(key) = std::env::var(&self.config.api_key_env) {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
        }
        let response = request
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Status(status.as_u16()));
        }
        let body: ChatResponse = response
            .json()
            .map_err(|e| LlmError::Schema(e.to_string()))?;
        if body.choices.is_empty() {
            return Err(LlmError::Schema("response has no choices".to_string()));
        }
        Ok(body
            .choices
            .into_iter()
            .map(|choice| LlmChoice {
                text: choice.message.content,
                sum_logprob: choice.logprobs.map(|lp| {
                    lp.content
                        .iter()
                        .map(|token| token.logprob)
                        .sum::<f64>()
                }),
            })
            .collect())
    }
}

fn is_transient(err: &LlmError) -> bool {
    matches!(err, LlmError::Transport(_)) || matches!(err, LlmError::Status(s) if *s == 429 || *s >= 500)
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

// ── Judge built on the client ─────────────────────────────────────────

/// Answer-equivalence judge speaking the verification prompt.
pub struct LlmJudgeClient {
    client: LlmClient,
    template: crate::assets::PromptTemplate,
}

impl LlmJudgeClient {
    pub fn new(client: LlmClient, template: crate::assets::PromptTemplate) -> Self {
        Self { client, template }
    }
}

impl LlmJudge for LlmJudgeClient {
    fn affirm_equivalence(&self, prediction: &str, reference: &str) -> Result<bool, JudgeError> {
        let prompt = self
            .template
            .fill(&[("prediction", prediction), ("reference", reference)])
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        let choices = self
            .client
            .complete(&prompt, 1, 0.0)
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        Ok(parse_verdict(&choices[0].text))
    }
}

/// Case-insensitive leading yes/no token; anything else counts as "no".
pub fn parse_verdict(text: &str) -> bool {
    let first = text
        .trim()
        .split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .next()
        .unwrap_or("");
    match first.to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        other => {
            log::warn!("judge verdict {other:?} is neither yes nor no; counting as no");
            false
        }
    }
}
