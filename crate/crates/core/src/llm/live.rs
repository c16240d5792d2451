//! HTTP backend for OpenAI-style `/chat/completions` endpoints.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{BackendKind, ChatBackend, ChatRequest, Completion, GatewayError, TokenUsage};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl LiveConfig {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }

    /// Reads the API key from `env_var`; a missing or empty key is an auth error.
    pub fn from_env(base_url: impl Into<String>, env_var: &str) -> Result<Self, GatewayError> {
        match std::env::var(env_var) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(base_url, key.trim())),
            _ => Err(GatewayError::Auth(format!("API key not set in ${env_var}"))),
        }
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

enum Attempt {
    Done(Completion),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { config, http })
    }

    fn body(req: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(max) = req.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn attempt(&self, req: &ChatRequest, attempt: u32) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url);
        let started = Instant::now();
        let resp = match self
            .http
            .post(&url)
            .bearer_auth(&self.config.api_key)
            .json(&Self::body(req))
            .send()
        {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(GatewayError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Attempt::Fail(GatewayError::Auth(format!("provider answered {status}")));
        }
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(GatewayError::RateLimit { attempts: attempt });
        }
        if status.is_server_error() {
            return Attempt::Retry(GatewayError::Transport {
                attempts: attempt,
                message: format!("provider answered {status}"),
            });
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fail(GatewayError::BadResponse(format!("{status}: {text}")));
        }
        let wire: WireResponse = match resp.json() {
            Ok(w) => w,
            Err(e) => return Attempt::Fail(GatewayError::BadResponse(e.to_string())),
        };
        let Some(text) = wire.choices.into_iter().next().and_then(|c| c.message.content) else {
            return Attempt::Fail(GatewayError::BadResponse("response has no message content".into()));
        };
        let usage = wire
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_else(|| TokenUsage::estimate(req, &text));
        Attempt::Done(Completion {
            text,
            latency_ms: started.elapsed().as_millis() as u64,
            usage,
        })
    }
}

impl ChatBackend for LiveBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }

    fn call(&self, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let max = self.config.max_attempts.max(1);
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(req, attempt) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= max => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt, error = %e, "retrying llm call");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}
