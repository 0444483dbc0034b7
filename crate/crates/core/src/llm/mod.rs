//! Chat-completion backends.
//!
//! Every backend takes a [`ChatRequest`] and returns a [`ChatResponse`].
//! Transport problems are errors; content problems (bad format, unknown
//! actions) are not, they belong to the planning loop.

mod http;
mod mock;
mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{
    Fault, GoldTable, MockBackend, MockScript, Responder, DEFAULT_ANSWER, GARBAGE_RESPONSE, MOCK_NAMES,
};
pub use transcript::{
    read_transcript, record_transcript, write_transcript, Exchange, ReplayBackend,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no recorded response for request digest {0}")]
    ReplayMiss(String),
    #[error("mock script exhausted at turn {0}")]
    ScriptExhausted(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Whether resending the identical request may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Timeout(_) | LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    /// Single-turn request with default decoding (temperature 0).
    pub fn new(prompt: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("no user message".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(LlmError::InvalidRequest("last message must be from the user".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Zero-based turn index: user messages before the last one.
    pub fn turn(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .count()
            .saturating_sub(1)
    }

    /// Content of the first user message (the assembled prompt).
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default()
    }

    /// SHA-256 over the canonical JSON serialization. Stable across
    /// processes since field order is fixed by the struct definitions.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub backend_id: String,
    #[serde(with = "millis")]
    pub latency: Duration,
    #[serde(default)]
    pub raw_metadata: BTreeMap<String, serde_json::Value>,
}

impl ChatResponse {
    pub fn new(backend_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatResponse {
            content: content.into(),
            backend_id: backend_id.into(),
            latency: Duration::ZERO,
            raw_metadata: BTreeMap::new(),
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// A chat-completion service. Implementations are shared across concurrent
/// episodes.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Maximum number of requests this backend should serve at once.
    fn concurrency_limit(&self) -> usize {
        1
    }
}

pub type BackendHandle = Arc<dyn ChatBackend>;

impl fmt::Debug for dyn ChatBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChatBackend({})", self.id())
    }
}

/// Records every exchange that passes through it, in call order. Used for
/// one episode at a time.
pub struct Recorder {
    inner: BackendHandle,
    log: Mutex<Vec<Exchange>>,
}

impl Recorder {
    pub fn new(inner: BackendHandle) -> Self {
        Recorder {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("recorder lock").clone()
    }

    pub fn take(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().expect("recorder lock"))
    }
}

impl ChatBackend for Recorder {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        self.log.lock().expect("recorder lock").push(Exchange {
            digest: request.digest(),
            request: request.clone(),
            response: response.clone(),
        });
        Ok(response)
    }

    fn concurrency_limit(&self) -> usize {
        self.inner.concurrency_limit()
    }
}
