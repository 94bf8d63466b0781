//! Uniform adapter over chat-completion providers.
//!
//! One wire protocol (the OpenAI-compatible chat-completions JSON shape)
//! serves every provider; the pieces around it are multi-attempt sampling,
//! a pre-flight context-window guard, retry with exponential backoff, a
//! shared rate limiter, and deterministic record/replay keyed by a stable
//! request hash.

mod ratelimit;
mod replay;
pub mod transport;

pub use ratelimit::RateLimiter;
pub use replay::{ReplayStore, ReplayStoreError};
#[cfg(feature = "http")]
pub use transport::HttpTransport;
pub use transport::{Transport, TransportError, TransportRequest};

use crate::prompting::Message;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

fn default_temperature() -> f64 {
    0.3
}
fn default_timeout_s() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

/// One chat-completion endpoint plus its sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub max_context_tokens: u64,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidConfig(format!(
                "provider '{}': temperature {} outside [0, 2]",
                self.name, self.temperature
            )));
        }
        if self.max_context_tokens == 0 {
            return Err(GatewayError::InvalidConfig(format!(
                "provider '{}': max_context_tokens must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// A single request/response pair through the gateway.
///
/// `response_text` is set exactly when no error was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub key: String,
    pub provider: String,
    pub model_id: String,
    pub temperature: f64,
    pub attempt_index: usize,
    pub request_messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt estimated at {estimated_tokens} tokens exceeds context window of {max_context_tokens}")]
    ContextOverflow { estimated_tokens: u64, max_context_tokens: u64 },
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("replay miss for request key {0}")]
    ReplayMiss(String),
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] ReplayStoreError),
}

enum Mode {
    Live,
    Record(ReplayStore),
    Replay(ReplayStore),
}

/// Shared gateway used by every pipeline worker in a run.
pub struct Gateway {
    mode: Mode,
    transport: Arc<dyn Transport>,
    limiter: Option<RateLimiter>,
}

/// Conservative words-to-tokens factor for the context guard.
const TOKENS_PER_WORD: f64 = 1.5;

/// ceil(words * 1.5), the pre-flight token estimate.
pub fn estimate_tokens(messages: &[Message]) -> u64 {
    let words: usize = messages.iter().map(|m| m.content.split_whitespace().count()).sum();
    (words as f64 * TOKENS_PER_WORD).ceil() as u64
}

/// Stable request key: hash of provider name, model, temperature, messages
/// and attempt index, independent of process or map iteration order.
pub fn request_key(provider: &ProviderConfig, messages: &[Message], attempt_index: usize) -> String {
    let canonical = serde_json::json!([
        provider.name,
        provider.model_id,
        provider.temperature,
        messages,
        attempt_index,
    ]);
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Gateway {
    pub fn live(transport: Arc<dyn Transport>, requests_per_minute: Option<f64>) -> Self {
        Gateway { mode: Mode::Live, transport, limiter: requests_per_minute.map(RateLimiter::new) }
    }

    /// Record every exchange under `store_dir` while serving live traffic.
    pub fn record(
        store_dir: &Path,
        transport: Arc<dyn Transport>,
        requests_per_minute: Option<f64>,
    ) -> Result<Self, GatewayError> {
        Ok(Gateway {
            mode: Mode::Record(ReplayStore::open_record(store_dir)?),
            transport,
            limiter: requests_per_minute.map(RateLimiter::new),
        })
    }

    /// Serve exclusively from a recorded store; unseen requests error with
    /// `ReplayMiss` and no network I/O ever happens.
    pub fn replay(store_dir: &Path) -> Result<Self, GatewayError> {
        Ok(Gateway {
            mode: Mode::Replay(ReplayStore::open_replay(store_dir)?),
            transport: Arc::new(NoTransport),
            limiter: None,
        })
    }

    /// Replay mode with an injected transport, for asserting that replay
    /// performs zero transport calls.
    pub fn replay_with_transport(
        store_dir: &Path,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, GatewayError> {
        Ok(Gateway {
            mode: Mode::Replay(ReplayStore::open_replay(store_dir)?),
            transport,
            limiter: None,
        })
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.mode, Mode::Replay(_))
    }

    /// One completion for `messages`, with the context guard applied before
    /// any store or network activity.
    pub fn chat(
        &self,
        provider: &ProviderConfig,
        messages: &[Message],
        attempt_index: usize,
    ) -> Result<ChatExchange, GatewayError> {
        let estimated = estimate_tokens(messages);
        if estimated > provider.max_context_tokens {
            return Err(GatewayError::ContextOverflow {
                estimated_tokens: estimated,
                max_context_tokens: provider.max_context_tokens,
            });
        }

        let key = request_key(provider, messages, attempt_index);
        match &self.mode {
            Mode::Replay(store) => match store.get(&key) {
                Some(mut exchange) => {
                    exchange.latency_ms = 0;
                    if let Some(err) = exchange.error.clone() {
                        return Err(GatewayError::ProviderUnavailable(err));
                    }
                    Ok(exchange)
                }
                None => Err(GatewayError::ReplayMiss(key)),
            },
            Mode::Record(store) => {
                if let Some(mut hit) = store.get(&key) {
                    hit.latency_ms = 0;
                    if let Some(err) = hit.error.clone() {
                        return Err(GatewayError::ProviderUnavailable(err));
                    }
                    return Ok(hit);
                }
                let result = self.call_live(provider, messages, attempt_index, &key);
                match &result {
                    Ok(exchange) => store.put(exchange)?,
                    Err(GatewayError::ProviderUnavailable(msg))
                    | Err(GatewayError::MalformedResponse(msg)) => {
                        store.put(&ChatExchange {
                            key: key.clone(),
                            provider: provider.name.clone(),
                            model_id: provider.model_id.clone(),
                            temperature: provider.temperature,
                            attempt_index,
                            request_messages: messages.to_vec(),
                            response_text: None,
                            error: Some(msg.clone()),
                            usage: None,
                            latency_ms: 0,
                        })?;
                    }
                    Err(_) => {}
                }
                result
            }
            Mode::Live => self.call_live(provider, messages, attempt_index, &key),
        }
    }

    /// k independent samples at the configured temperature. Per-attempt
    /// failures come back as error records rather than aborting the batch.
    pub fn chat_multi(
        &self,
        provider: &ProviderConfig,
        messages: &[Message],
        k: usize,
    ) -> Vec<ChatExchange> {
        assert!(k >= 1, "chat_multi requires k >= 1");
        (1..=k)
            .map(|attempt| match self.chat(provider, messages, attempt) {
                Ok(exchange) => exchange,
                Err(err) => ChatExchange {
                    key: request_key(provider, messages, attempt),
                    provider: provider.name.clone(),
                    model_id: provider.model_id.clone(),
                    temperature: provider.temperature,
                    attempt_index: attempt,
                    request_messages: messages.to_vec(),
                    response_text: None,
                    error: Some(err.to_string()),
                    usage: None,
                    latency_ms: 0,
                },
            })
            .collect()
    }

    fn call_live(
        &self,
        provider: &ProviderConfig,
        messages: &[Message],
        attempt_index: usize,
        key: &str,
    ) -> Result<ChatExchange, GatewayError> {
        let body = serde_json::json!({
            "model": provider.model_id,
            "messages": messages,
            "temperature": provider.temperature,
        });
        let bearer_token = if provider.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&provider.api_key_env).ok()
        };
        let request = TransportRequest {
            url: provider.endpoint_url.clone(),
            bearer_token,
            body,
            timeout: Duration::from_secs(provider.timeout_s),
        };

        let started = Instant::now();
        let mut last_error = String::new();
        for retry in 0..=provider.max_retries {
            if retry > 0 && provider.retry_backoff_ms > 0 {
                let backoff = provider.retry_backoff_ms.saturating_mul(1 << (retry - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            if let Some(ref limiter) = self.limiter {
                limiter.acquire();
            }
            match self.transport.send(&request) {
                Ok(body) => {
                    let latency_ms = started.elapsed().as_millis() as u64;
                    let (text, usage) = parse_completion(&body)?;
                    return Ok(ChatExchange {
                        key: key.to_string(),
                        provider: provider.name.clone(),
                        model_id: provider.model_id.clone(),
                        temperature: provider.temperature,
                        attempt_index,
                        request_messages: messages.to_vec(),
                        response_text: Some(text),
                        error: None,
                        usage,
                        latency_ms,
                    });
                }
                Err(TransportError::Fatal(msg)) => {
                    return Err(GatewayError::ProviderUnavailable(msg));
                }
                Err(TransportError::Retryable(msg)) => last_error = msg,
            }
        }
        Err(GatewayError::ProviderUnavailable(format!(
            "exhausted {} retries: {last_error}",
            provider.max_retries
        )))
    }
}

struct NoTransport;

impl Transport for NoTransport {
    fn send(&self, _request: &TransportRequest) -> Result<String, TransportError> {
        Err(TransportError::Fatal("replay gateway performs no network I/O".into()))
    }
}

fn parse_completion(body: &str) -> Result<(String, Option<TokenUsage>), GatewayError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            GatewayError::MalformedResponse("missing choices[0].message.content".into())
        })?
        .to_string();
    let usage = value.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            total_tokens: u.get("total_tokens")?.as_u64()?,
        })
    });
    Ok((text, usage))
}
