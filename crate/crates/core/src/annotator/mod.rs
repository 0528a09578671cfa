//! Labelling documents through a chat-completion transport.

mod batch;
mod cache;
mod transport;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{PromptHash, RenderedPrompt};

pub use batch::{annotate_batch, AnnotationFailure, BatchOptions, BatchOutcome, FailureKind};
pub use cache::AnnotationCache;
pub use transport::{
    approx_request_tokens, approx_tokens, ChatMessage, ChatRequest, Completion, HttpTransport,
    MockFault, MockReply, MockTransport, Transport, TransportError, API_KEY_ENV, ENDPOINT_ENV,
};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const REINFORCED_INSTRUCTION: &str = "Respond with only 0 or 1.";

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("malformed response {0:?}: expected 0 or 1")]
    MalformedResponse(String),
    #[error("transport failure for {doc_id} after {attempts} attempt(s): {source}")]
    TransportFailure {
        doc_id: String,
        attempts: u32,
        #[source]
        source: TransportError,
    },
    #[error("no valid label for {doc_id} after reinforced retry; last response {raw:?}")]
    LabelFailure { doc_id: String, raw: String },
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub endpoint_url: String,
    /// USD per million prompt tokens.
    pub price_per_1m_input_tokens: f64,
    /// USD per million completion tokens.
    pub price_per_1m_output_tokens: f64,
}

impl ModelConfig {
    /// Known models get their August 2024 list prices; others are priced at zero.
    pub fn preset(model_id: &str) -> Self {
        let (input, output) = match model_id {
            "gpt-4o-mini-2024-07-18" | "gpt-4o-mini" => (0.15, 0.60),
            "gpt-4o-2024-08-06" | "gpt-4o" => (2.50, 10.00),
            _ => (0.0, 0.0),
        };
        ModelConfig {
            model_id: model_id.to_string(),
            temperature: 0.0,
            max_output_tokens: 4,
            endpoint_url: DEFAULT_ENDPOINT.to_string(),
            price_per_1m_input_tokens: input,
            price_per_1m_output_tokens: output,
        }
    }

    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.temperature != 0.0 {
            return Err(AnnotateError::InvalidConfig(format!(
                "temperature must be 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(AnnotateError::InvalidConfig("max_output_tokens must be >= 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(AnnotateError::InvalidConfig("model_id is empty".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::preset("gpt-4o-mini-2024-07-18")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub doc_id: String,
    pub label: u8,
    pub raw_response: String,
    pub model_id: String,
    pub prompt_hash: PromptHash,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Run-local; never written to the cache log or the annotation file.
    #[serde(skip)]
    pub from_cache: bool,
}

/// Trims whitespace and trailing punctuation, then accepts exactly `0` or `1`.
pub fn parse_label(raw: &str) -> Result<u8, AnnotateError> {
    let trimmed = raw
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    match trimmed {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(AnnotateError::MalformedResponse(raw.to_string())),
    }
}

const MAX_HINT: Duration = Duration::from_secs(120);

/// Capped exponential backoff with jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no sleeping. For offline runs and tests.
    pub fn immediate() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, max_delay: Duration::ZERO, jitter: false, ..Default::default() }
    }

    /// Delay before retry number `retry` (1-based). A server hint replaces the backoff, capped at two minutes.
    pub fn delay(&self, retry: u32, hint: Option<Duration>) -> Duration {
        if let Some(h) = hint {
            return h.min(MAX_HINT);
        }
        let exp = self.base_delay.saturating_mul(1u32 << (retry.saturating_sub(1)).min(16));
        let capped = exp.min(self.max_delay);
        if self.jitter && !capped.is_zero() {
            capped.mul_f64(rand::rng().random_range(0.5..=1.0))
        } else {
            capped
        }
    }
}

fn send_with_retry(
    transport: &dyn Transport,
    policy: &RetryPolicy,
    doc_id: &str,
    request: &ChatRequest,
) -> Result<Completion, AnnotateError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match transport.complete(doc_id, request) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_retryable() && attempt < policy.max_attempts => {
                let hint = match &e {
                    TransportError::RateLimited { retry_after } => *retry_after,
                    _ => None,
                };
                let wait = policy.delay(attempt, hint);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            Err(source) => {
                return Err(AnnotateError::TransportFailure {
                    doc_id: doc_id.to_string(),
                    attempts: attempt,
                    source,
                })
            }
        }
    }
}

/// Labels one document: cache lookup, then one request with one reinforced retry on malformed output.
pub fn classify_one(
    transport: &dyn Transport,
    config: &ModelConfig,
    prompt: &RenderedPrompt,
    doc_id: &str,
    cache: &AnnotationCache,
    policy: &RetryPolicy,
) -> Result<AnnotationResult, AnnotateError> {
    if let Some(mut hit) = cache.get(prompt.prompt_hash, doc_id) {
        hit.from_cache = true;
        return Ok(hit);
    }
    let request = ChatRequest::new(
        &config.model_id,
        &prompt.system_text,
        &prompt.user_text,
        config.max_output_tokens,
    );
    let first = send_with_retry(transport, policy, doc_id, &request)?;
    let mut input_tokens = first.input_tokens;
    let mut output_tokens = first.output_tokens;
    let (label, raw_response) = match parse_label(&first.content) {
        Ok(l) => (l, first.content),
        Err(_) => {
            let reinforced = ChatRequest::new(
                &config.model_id,
                &prompt.system_text,
                &format!("{}\n\n{REINFORCED_INSTRUCTION}", prompt.user_text),
                config.max_output_tokens,
            );
            let second = send_with_retry(transport, policy, doc_id, &reinforced)?;
            input_tokens += second.input_tokens;
            output_tokens += second.output_tokens;
            match parse_label(&second.content) {
                Ok(l) => (l, second.content),
                Err(_) => {
                    return Err(AnnotateError::LabelFailure {
                        doc_id: doc_id.to_string(),
                        raw: second.content,
                    })
                }
            }
        }
    };
    let result = AnnotationResult {
        doc_id: doc_id.to_string(),
        label,
        raw_response,
        model_id: config.model_id.clone(),
        prompt_hash: prompt.prompt_hash,
        input_tokens,
        output_tokens,
        from_cache: false,
    };
    cache.put(&result)?;
    Ok(result)
}

/// `corpus_size × (avg_in × input price + avg_out × output price) / 1e6`, in USD.
pub fn estimate_cost(
    corpus_size: u64,
    avg_input_tokens: f64,
    avg_output_tokens: f64,
    config: &ModelConfig,
) -> f64 {
    corpus_size as f64
        * (avg_input_tokens * config.price_per_1m_input_tokens
            + avg_output_tokens * config.price_per_1m_output_tokens)
        / 1e6
}

/// Writes results as JSONL in the given order.
pub fn write_annotations<W: Write>(mut out: W, results: &[AnnotationResult]) -> io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads an annotation JSONL file; a malformed line is an `InvalidData` error
/// naming its line number.
pub fn read_annotations<R: BufRead>(reader: R) -> io::Result<Vec<AnnotationResult>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationResult = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        if r.label > 1 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: label {} is not 0 or 1", i + 1, r.label),
            ));
        }
        out.push(r);
    }
    Ok(out)
}

/// doc id -> label. Later duplicates win.
pub fn labels_by_doc(results: &[AnnotationResult]) -> BTreeMap<String, u8> {
    results.iter().map(|r| (r.doc_id.clone(), r.label)).collect()
}
