//! Chat-completion gateway.
//!
//! Every model call in the crate goes through [`LlmClient::complete`]. The
//! gateway validates the request, enforces the zero-temperature contract for
//! assessment calls, applies the concurrency and rate limits, and appends one
//! [`ChatRecord`] per successful call to the client's log. Backends are
//! pluggable: live HTTP, fixture replay and scripted mocks.

mod fixture;
mod limit;
mod live;
mod mock;
mod replay;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};

pub use fixture::{read_fixture, record_fixture, write_fixture, FixtureEntry};
pub use limit::{Limiter, LimiterConfig};
pub use live::{LiveBackend, LiveConfig};
pub use mock::MockBackend;
pub use replay::ReplayBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurposeTag {
    AgentChat,
    Memory,
    Reflection,
    Decide,
    Emotion,
    Traits,
    DirectAssess,
    QueAssess,
    /// Stand-in player used by self-play simulation.
    SimulatedPlayer,
}

impl PurposeTag {
    pub fn requires_zero_temperature(self) -> bool {
        matches!(self, PurposeTag::DirectAssess | PurposeTag::QueAssess)
    }
}

impl fmt::Display for PurposeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("tag serializes");
        f.write_str(s.as_str().unwrap_or("unknown"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub purpose: PurposeTag,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, purpose: PurposeTag, temperature: f64) -> Self {
        Self {
            model_id: model_id.into(),
            messages: Vec::new(),
            temperature,
            max_tokens: None,
            purpose,
        }
    }

    pub fn system(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message::system(content));
        self
    }

    pub fn user(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message::user(content));
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if self.messages[0].role != Role::System {
            return Err(GatewayError::InvalidRequest("first message must be the system prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.purpose.requires_zero_temperature() && self.temperature != 0.0 {
            return Err(GatewayError::TemperatureContract {
                purpose: self.purpose,
                temperature: self.temperature,
            });
        }
        Ok(())
    }

    /// Canonical form used for fixture keys: model, messages and temperature
    /// only, with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let messages: Vec<BTreeMap<&str, serde_json::Value>> = self
            .messages
            .iter()
            .map(|m| {
                BTreeMap::from([
                    ("content", serde_json::Value::from(m.content.as_str())),
                    ("role", serde_json::to_value(m.role).expect("role serializes")),
                ])
            })
            .collect();
        let canonical = BTreeMap::from([
            ("messages", serde_json::to_value(messages).expect("messages serialize")),
            ("model_id", serde_json::Value::from(self.model_id.as_str())),
            ("temperature", serde_json::Value::from(self.temperature)),
        ]);
        serde_json::to_string(&canonical).expect("canonical form serializes")
    }

    pub fn canonical_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

impl TokenUsage {
    /// Rough count for backends that do not report usage.
    pub fn estimate(req: &ChatRequest, response: &str) -> Self {
        let prompt: usize = req.messages.iter().map(|m| m.content.len()).sum();
        Self {
            prompt_tokens: (prompt / 4) as u32,
            completion_tokens: (response.len() / 4) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub hash: String,
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub usage: TokenUsage,
    pub backend: BackendKind,
    pub timestamp_ms: u64,
}

/// What a backend returns for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimit { attempts: u32 },
    #[error("{purpose} calls must use temperature 0, got {temperature}")]
    TemperatureContract { purpose: PurposeTag, temperature: f64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no recorded response for {purpose} request {hash}")]
    ReplayMiss { purpose: PurposeTag, hash: String },
    #[error("mock backend has no response for {0} request")]
    MockExhausted(PurposeTag),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
}

pub trait ChatBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn call(&self, req: &ChatRequest) -> Result<Completion, GatewayError>;
}

/// Backend plus the shared limits. One per provider.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    clock: Arc<dyn Clock>,
    limiter: Option<Arc<Limiter>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            clock: Arc::new(SystemClock),
            limiter: None,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Shares `limiter` with every other gateway holding it.
    pub fn with_limiter(mut self, limiter: Arc<Limiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    fn call(&self, req: &ChatRequest) -> Result<ChatRecord, GatewayError> {
        req.validate()?;
        let completion = match &self.limiter {
            Some(l) => {
                let _permit = l.acquire();
                self.backend.call(req)?
            }
            None => self.backend.call(req)?,
        };
        Ok(ChatRecord {
            hash: req.canonical_hash(),
            request: req.clone(),
            response_text: completion.text,
            latency_ms: completion.latency_ms,
            usage: completion.usage,
            backend: self.backend.kind(),
            timestamp_ms: self.clock.now_ms(),
        })
    }
}

/// Handle used by the pipeline: a shared gateway plus the record log that
/// belongs to one session (or one forked unit of work).
#[derive(Clone)]
pub struct LlmClient {
    gateway: Arc<Gateway>,
    log: Arc<Mutex<Vec<ChatRecord>>>,
}

impl LlmClient {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self {
            gateway,
            log: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn from_backend(backend: impl ChatBackend + 'static) -> Self {
        Self::new(Arc::new(Gateway::new(Arc::new(backend))))
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let record = self.gateway.call(req)?;
        let text = record.response_text.clone();
        tracing::debug!(purpose = %req.purpose, hash = %record.hash, "llm call");
        self.log.lock().push(record);
        Ok(text)
    }

    /// Same gateway, empty log. Merge back with [`LlmClient::absorb`].
    pub fn fork(&self) -> LlmClient {
        LlmClient {
            gateway: self.gateway.clone(),
            log: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn absorb(&self, other: &LlmClient) {
        let mut records = other.take_records();
        self.log.lock().append(&mut records);
    }

    pub fn records(&self) -> Vec<ChatRecord> {
        self.log.lock().clone()
    }

    pub fn take_records(&self) -> Vec<ChatRecord> {
        std::mem::take(&mut *self.log.lock())
    }

    pub fn record_count(&self) -> usize {
        self.log.lock().len()
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.gateway.backend_kind()
    }
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("backend", &self.gateway.backend_kind())
            .field("records", &self.record_count())
            .finish()
    }
}
