//! Chat-completion providers.
//!
//! [`Provider`] owns the retry policy and the query counters; the wire work
//! is delegated to a [`Transport`]. Two transports ship: [`HttpTransport`]
//! for an OpenAI-style `/chat/completions` endpoint and [`ScriptedTransport`],
//! which replays canned responses from a JSON script for offline runs.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_ENV: &str = "CONTRAST_REPAIR_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script entry {index} expects the prompt to contain {expected:?}")]
    ScriptMismatch { index: usize, expected: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, system: &str, user: &str, temperature: f64) -> Self {
        CompletionRequest {
            model: model.into(),
            messages: vec![
                Message {
                    role: Role::System,
                    content: system.to_string(),
                },
                Message {
                    role: Role::User,
                    content: user.to_string(),
                },
            ],
            temperature,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => Err(LlmError::InvalidRequest(
                "first message must be the system message".into(),
            )),
            _ => Ok(()),
        }
    }

    /// All message contents, newline-joined.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProviderStats {
    pub query_count: u64,
    pub retry_count: u64,
}

/// Why a single send failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendFailure {
    /// Worth another attempt (network trouble, 5xx).
    Transient(String),
    /// HTTP 429; retried like a transient failure.
    RateLimited(String),
    /// Nothing was sent because there is nothing left to send.
    Exhausted(String),
    /// Not retried.
    Fatal(LlmError),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<String, SendFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Pause before retry number `retry` (0-based): 1s, 2s, 4s, ...
    pub fn backoff(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub struct Provider {
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    queries: AtomicU64,
    retries: AtomicU64,
}

impl Provider {
    pub fn new(transport: impl Transport + 'static) -> Self {
        Provider {
            transport: Box::new(transport),
            retry: RetryPolicy::default(),
            queries: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mock_from_script(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(Provider::new(ScriptedTransport::from_path(path)?))
    }

    pub fn live(config: &ProviderConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok();
        Ok(Provider::new(HttpTransport::new(&config.url, key)?))
    }

    pub fn stats(&self) -> ProviderStats {
        ProviderStats {
            query_count: self.queries.load(Ordering::SeqCst),
            retry_count: self.retries.load(Ordering::SeqCst),
        }
    }

    /// One logical completion. Counts as one query however many attempts it
    /// takes, unless the transport had nothing to send at all.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        request.validate()?;
        let mut attempt = 0;
        loop {
            let failure = match self.transport.send(request) {
                Ok(text) => {
                    self.queries.fetch_add(1, Ordering::SeqCst);
                    return Ok(text);
                }
                Err(SendFailure::Exhausted(msg)) => return Err(LlmError::Transport(msg)),
                Err(SendFailure::Fatal(e)) => {
                    self.queries.fetch_add(1, Ordering::SeqCst);
                    return Err(e);
                }
                Err(SendFailure::Transient(m) | SendFailure::RateLimited(m)) => m,
            };
            attempt += 1;
            if attempt >= self.retry.attempts {
                self.queries.fetch_add(1, Ordering::SeqCst);
                return Err(LlmError::Transport(format!(
                    "giving up after {attempt} attempts: {failure}"
                )));
            }
            log::warn!("completion attempt {attempt} failed: {failure}; retrying");
            self.retries.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(self.retry.backoff(attempt - 1));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub url: String,
    pub model: String,
    pub temperature: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
        }
    }
}

pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

    pub fn new(url: &str, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Self::REQUEST_TIMEOUT)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpTransport {
            url: url.to_string(),
            api_key,
            client,
        })
    }
}

/// First choice's message content of a chat-completion response body.
pub fn parse_chat_response(body: &str) -> Result<String, LlmError> {
    let json: Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    json.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<String, SendFailure> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| SendFailure::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| SendFailure::Transient(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(SendFailure::RateLimited(format!("HTTP 429: {text}")));
        }
        if status.is_server_error() {
            return Err(SendFailure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(SendFailure::Fatal(LlmError::Transport(format!(
                "HTTP {status}: {text}"
            ))));
        }
        parse_chat_response(&text).map_err(SendFailure::Fatal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
    pub response: String,
}

/// Replays a JSON array of `{"match": <optional substring>, "response": <text>}`
/// entries, one per call.
pub struct ScriptedTransport {
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedTransport {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedTransport {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Transport(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedResponse(format!("{}: {e}", path.display())))?;
        Ok(ScriptedTransport::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().unwrap()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &CompletionRequest) -> Result<String, SendFailure> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| SendFailure::Exhausted("script exhausted".into()))?;
        *cursor += 1;
        if let Some(expected) = &entry.expect {
            if !request.prompt_text().contains(expected.as_str()) {
                return Err(SendFailure::Fatal(LlmError::ScriptMismatch {
                    index,
                    expected: expected.clone(),
                }));
            }
        }
        Ok(entry.response.clone())
    }
}
