//! HTTP transport behind the gateway, kept as a trait so tests can inject
//! scripted or counting transports.

use serde_json::Value;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct TransportRequest {
    pub url: String,
    pub bearer_token: Option<String>,
    pub body: Value,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Connection failures, timeouts, HTTP 429 and 5xx; retried with backoff.
    Retryable(String),
    /// Anything else; surfaces immediately.
    Fatal(String),
}

impl TransportError {
    pub fn message(&self) -> &str {
        match self {
            TransportError::Retryable(m) | TransportError::Fatal(m) => m,
        }
    }
}

/// Sends one chat-completion POST and returns the raw response body.
pub trait Transport: Send + Sync {
    fn send(&self, request: &TransportRequest) -> Result<String, TransportError>;
}

/// Production transport over a blocking HTTP client.
#[cfg(feature = "http")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport { client: reqwest::blocking::Client::new() }
    }
}

#[cfg(feature = "http")]
impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "http")]
impl Transport for HttpTransport {
    fn send(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let mut builder = self
            .client
            .post(&request.url)
            .timeout(request.timeout)
            .json(&request.body);
        if let Some(ref token) = request.bearer_token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                TransportError::Retryable(e.to_string())
            } else {
                TransportError::Fatal(e.to_string())
            }
        })?;

        let status = response.status();
        let body = response
            .text()
            .map_err(|e| TransportError::Retryable(format!("reading body: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Retryable(format!("HTTP {status}: {body}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}: {body}")));
        }
        Ok(body)
    }
}
