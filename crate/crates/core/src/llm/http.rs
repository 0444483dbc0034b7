//! Generic chat-completion client over HTTP.
//!
//! Wire shape: `POST {endpoint}` with
//! `{"<model_field>": model, "messages": [{"role", "content"}], "temperature", "max_tokens"}`,
//! answer read from `choices[0].message.content`.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

fn default_auth_header() -> String {
    "Authorization".to_string()
}

fn default_model_field() -> String {
    "model".to_string()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_concurrency() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub name: String,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key. The key itself is never
    /// stored in configuration.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_model_field")]
    pub model_field: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Resends on transport errors only.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Minimum spacing between requests, a simple rate limit.
    #[serde(default)]
    pub min_interval_ms: u64,
}

pub struct HttpBackend {
    config: HttpConfig,
    id: String,
    agent: ureq::Agent,
    api_key: Option<String>,
    last_request: Mutex<Option<Instant>>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let api_key = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            id: config.name.clone(),
            config,
            agent,
            api_key,
            last_request: Mutex::new(None),
        })
    }

    fn body(&self, request: &ChatRequest) -> String {
        let mut body = serde_json::Map::new();
        body.insert(self.config.model_field.clone(), json!(self.config.model));
        body.insert("messages".into(), json!(request.messages));
        body.insert("temperature".into(), json!(request.temperature));
        body.insert("max_tokens".into(), json!(request.max_output_tokens));
        Value::Object(body).to_string()
    }

    fn pace(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last_request.lock().expect("rate limit lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(&self, body: &str) -> Result<(String, BTreeMap<String, Value>), LlmError> {
        self.pace();
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            req = req.header(self.config.auth_header.as_str(), value.as_str());
        }
        let mut response = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout(Duration::from_secs(self.config.timeout_secs)),
            other => LlmError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("response is not JSON: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))?
            .to_string();
        let mut metadata = BTreeMap::new();
        for key in ["id", "model", "usage"] {
            if let Some(v) = value.get(key) {
                metadata.insert(key.to_string(), v.clone());
            }
        }
        Ok((content, metadata))
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = self.body(request);
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok((content, raw_metadata)) => {
                    debug!(backend = %self.id, attempt, "completion received");
                    return Ok(ChatResponse {
                        content,
                        backend_id: self.id.clone(),
                        latency: started.elapsed(),
                        raw_metadata,
                    });
                }
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    attempt += 1;
                    warn!(backend = %self.id, attempt, error = %e, "transient failure, resending");
                    std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn concurrency_limit(&self) -> usize {
        self.config.concurrency.max(1)
    }
}
