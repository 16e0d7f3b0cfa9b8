//! Translator backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::PromptSpec;
use crate::chunker::Chunk;
use crate::error::{Error, Result};
use crate::lexer::{tokenize, Dialect};

pub const LLM_URL_ENV: &str = "MIGRATE_LLM_URL";
pub const LLM_KEY_ENV: &str = "MIGRATE_LLM_KEY";

/// A translation backend. `translate` is a single attempt; the pipelines
/// handle retries according to [`Translator::max_attempts`].
pub trait Translator: Send + Sync {
    fn id(&self) -> String;

    fn translate(&self, prompt: &PromptSpec, chunk: &Chunk) -> Result<String>;

    fn max_attempts(&self) -> u32 {
        1
    }

    /// Delay before retry number `attempt` (1-based count of failures so far).
    fn backoff(&self, _attempt: u32) -> Duration {
        Duration::ZERO
    }
}

/// Returns every chunk unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Echo;

impl Translator for Echo {
    fn id(&self) -> String {
        "echo".into()
    }

    fn translate(&self, _prompt: &PromptSpec, chunk: &Chunk) -> Result<String> {
        Ok(chunk.text.clone())
    }
}

/// Deterministic word-level rewrites (types and a few built-ins). Everything
/// outside the rewritten tokens is preserved byte for byte.
#[derive(Debug, Clone)]
pub struct RuleBaseline {
    rules: Vec<(String, String)>,
}

impl Default for RuleBaseline {
    fn default() -> Self {
        let rules = [
            ("NUMBER", "NUMERIC"),
            ("VARCHAR2", "VARCHAR"),
            ("NVARCHAR2", "VARCHAR"),
            ("CLOB", "TEXT"),
            ("BLOB", "BYTEA"),
            ("SYSDATE", "CURRENT_TIMESTAMP"),
            ("SYSTIMESTAMP", "CURRENT_TIMESTAMP"),
            ("NVL", "COALESCE"),
        ];
        RuleBaseline {
            rules: rules.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }
}

impl RuleBaseline {
    pub fn with_rules(rules: Vec<(String, String)>) -> Self {
        RuleBaseline {
            rules: rules.into_iter().map(|(a, b)| (a.to_uppercase(), b)).collect(),
        }
    }

    pub fn rewrite(&self, text: &str) -> String {
        let lexed = tokenize(text, Dialect::Oracle);
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for t in &lexed.tokens {
            if !t.is_word() || t.is_quoted_identifier() {
                continue;
            }
            if let Some((_, to)) = self.rules.iter().find(|(from, _)| t.text.eq_ignore_ascii_case(from)) {
                out.push_str(&text[last..t.start]);
                out.push_str(to);
                last = t.end;
            }
        }
        out.push_str(&text[last..]);
        out
    }
}

impl Translator for RuleBaseline {
    fn id(&self) -> String {
        "rule-baseline".into()
    }

    fn translate(&self, _prompt: &PromptSpec, chunk: &Chunk) -> Result<String> {
        Ok(self.rewrite(&chunk.text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpLlmConfig {
    /// Falls back to `MIGRATE_LLM_URL` when empty.
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for HttpLlmConfig {
    fn default() -> Self {
        HttpLlmConfig {
            url: String::new(),
            model: "default".into(),
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 500,
            max_tokens: 4096,
            temperature: 0.0,
        }
    }
}

/// JSON-over-HTTP model endpoint: request `{model, prompt, max_tokens,
/// temperature}`, response `{text}`, bearer token from `MIGRATE_LLM_KEY`.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    config: HttpLlmConfig,
    key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct LlmRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct LlmResponse {
    text: String,
}

impl HttpLlm {
    pub fn new(mut config: HttpLlmConfig) -> Result<Self> {
        if config.url.is_empty() {
            config.url = std::env::var(LLM_URL_ENV)
                .map_err(|_| Error::InvalidConfig(format!("no model endpoint: set {LLM_URL_ENV} or backend.url")))?;
        }
        if config.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpLlm {
            key: std::env::var(LLM_KEY_ENV).ok(),
            config,
            agent,
        })
    }
}

impl Translator for HttpLlm {
    fn id(&self) -> String {
        format!("http-llm:{}@{}", self.config.model, self.config.url)
    }

    fn translate(&self, prompt: &PromptSpec, _chunk: &Chunk) -> Result<String> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = LlmRequest {
            model: &self.config.model,
            prompt: &prompt.filled_text,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        };
        let resp: LlmResponse = req
            .send_json(&body)
            .map_err(|e| Error::Backend(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(strip_code_fences(&resp.text).to_string())
    }

    fn max_attempts(&self) -> u32 {
        self.config.max_attempts
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << attempt.saturating_sub(1).min(16)))
    }
}

/// Removes one surrounding Markdown code fence (with optional info string).
pub fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return text;
    };
    let Some(body_start) = rest.find('\n') else {
        return text;
    };
    let body = &rest[body_start + 1..];
    match body.strip_suffix("```") {
        Some(inner) => inner.strip_suffix('\n').unwrap_or(inner),
        None => text,
    }
}
