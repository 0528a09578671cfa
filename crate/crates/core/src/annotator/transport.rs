//! Chat-completion transports.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_KEY_ENV: &str = "NEGCAMP_API_KEY";
pub const ENDPOINT_ENV: &str = "NEGCAMP_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body of a chat-completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: &str, system: &str, user: &str, max_tokens: u32) -> Self {
        ChatRequest {
            model: model.to_string(),
            temperature: 0.0,
            messages: vec![
                ChatMessage { role: "system".into(), content: system.into() },
                ChatMessage { role: "user".into(), content: user.into() },
            ],
            max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Timeouts, connection resets, 5xx. Retried.
    #[error("transient transport failure: {0}")]
    Transient(String),
    /// HTTP 429; `retry_after` carries the server hint when present.
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    /// Anything retrying will not fix (bad request, auth, unknown document).
    #[error("{0}")]
    Fatal(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, TransportError::Fatal(_))
    }
}

/// Sends one chat request on behalf of a document.
///
/// `doc_id` lets offline transports look up canned answers; network
/// transports ignore it.
pub trait Transport: Send + Sync {
    fn complete(&self, doc_id: &str, request: &ChatRequest) -> Result<Completion, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn complete(&self, doc_id: &str, request: &ChatRequest) -> Result<Completion, TransportError> {
        (**self).complete(doc_id, request)
    }
}

/// Rough token count (one token per four characters, rounded up).
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Approximate prompt tokens of a request: text tokens plus 3 per message and 3 for the reply header.
pub fn approx_request_tokens(request: &ChatRequest) -> u64 {
    request.messages.iter().map(|m| approx_tokens(&m.content) + 3).sum::<u64>() + 3
}

/// HTTPS transport for OpenAI-compatible chat-completion endpoints.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
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
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: String, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        HttpTransport {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.to_string(),
            api_key,
        }
    }

    /// Reads the key from `NEGCAMP_API_KEY`.
    pub fn from_env(endpoint: &str, timeout: Duration) -> Option<Self> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())?;
        Some(Self::new(endpoint, key, timeout))
    }
}

fn parse_retry_after(value: &str) -> Option<Duration> {
    value.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

impl Transport for HttpTransport {
    fn complete(&self, _doc_id: &str, request: &ChatRequest) -> Result<Completion, TransportError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            429 => {
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(parse_retry_after);
                return Err(TransportError::RateLimited { retry_after });
            }
            408 | 500..=599 => return Err(TransportError::Transient(format!("HTTP {status}"))),
            _ => {
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                let snippet: String = body.chars().take(200).collect();
                return Err(TransportError::Fatal(format!("HTTP {status}: {snippet}")));
            }
        }
        let wire: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Transient(format!("unreadable response body: {e}")))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Fatal("response has no message content".into()))?;
        let (input_tokens, output_tokens) = match wire.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (approx_request_tokens(request), approx_tokens(&content)),
        };
        Ok(Completion { content, input_tokens, output_tokens })
    }
}

/// One scripted reply of the mock transport.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Fault { fail: MockFault },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFault {
    Transient,
    RateLimited,
    Fatal,
}

#[derive(Debug, Deserialize)]
struct MockLine {
    doc_id: String,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    script: Option<Vec<MockReply>>,
}

/// Offline transport answering from a `doc_id → response` map.
///
/// A document can also carry a script: successive calls consume successive
/// replies and the last one repeats. Token usage uses [`approx_request_tokens`].
/// Documents without an entry fail with [`TransportError::Fatal`].
#[derive(Debug, Default)]
pub struct MockTransport {
    scripts: BTreeMap<String, Vec<MockReply>>,
    cursor: Mutex<HashMap<String, usize>>,
    calls: AtomicU64,
}

impl MockTransport {
    pub fn from_responses<I, K, V>(responses: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self::from_scripts(
            responses
                .into_iter()
                .map(|(k, v)| (k.into(), vec![MockReply::Text(v.into())])),
        )
    }

    pub fn from_scripts<I, K>(scripts: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<MockReply>)>,
        K: Into<String>,
    {
        MockTransport {
            scripts: scripts
                .into_iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(k, s)| (k.into(), s))
                .collect(),
            ..Default::default()
        }
    }

    /// Reads JSONL lines `{"doc_id": .., "response": ..}` or `{"doc_id": .., "script": [..]}`.
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut scripts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: MockLine = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })?;
            let script = match (parsed.script, parsed.response) {
                (Some(s), _) => s,
                (None, Some(r)) => vec![MockReply::Text(r)],
                (None, None) => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: needs `response` or `script`", path.display(), i + 1),
                    ))
                }
            };
            scripts.push((parsed.doc_id, script));
        }
        Ok(Self::from_scripts(scripts))
    }

    /// Total calls received, including failed ones.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn complete(&self, doc_id: &str, request: &ChatRequest) -> Result<Completion, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let script = self
            .scripts
            .get(doc_id)
            .ok_or_else(|| TransportError::Fatal(format!("no mock response for `{doc_id}`")))?;
        let step = {
            let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
            let pos = cursor.entry(doc_id.to_string()).or_insert(0);
            let step = (*pos).min(script.len() - 1);
            *pos += 1;
            step
        };
        match &script[step] {
            MockReply::Text(content) => Ok(Completion {
                content: content.clone(),
                input_tokens: approx_request_tokens(request),
                output_tokens: approx_tokens(content),
            }),
            MockReply::Fault { fail: MockFault::Transient } => {
                Err(TransportError::Transient("injected timeout".into()))
            }
            MockReply::Fault { fail: MockFault::RateLimited } => {
                Err(TransportError::RateLimited { retry_after: Some(Duration::ZERO) })
            }
            MockReply::Fault { fail: MockFault::Fatal } => {
                Err(TransportError::Fatal("injected fatal error".into()))
            }
        }
    }
}
