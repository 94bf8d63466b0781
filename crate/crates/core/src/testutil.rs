//! Shared helpers for unit tests: a scripted transport and canned configs.

use crate::gateway::{ProviderConfig, Transport, TransportError, TransportRequest};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub(crate) fn completion_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
    })
    .to_string()
}

pub(crate) fn test_provider(name: &str) -> ProviderConfig {
    ProviderConfig {
        name: name.into(),
        endpoint_url: format!("http://localhost/{name}/v1/chat/completions"),
        model_id: format!("{name}-model"),
        temperature: 0.3,
        max_context_tokens: 100_000,
        api_key_env: String::new(),
        timeout_s: 5,
        max_retries: 0,
        retry_backoff_ms: 0,
    }
}

/// Serves canned completion texts in order; counts transport calls.
pub(crate) struct ScriptedTransport {
    script: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub(crate) fn new<I: IntoIterator<Item = S>, S: Into<String>>(texts: I) -> Self {
        ScriptedTransport {
            script: Mutex::new(texts.into_iter().map(|t| completion_body(&t.into())).collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub(crate) fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _request: &TransportRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| TransportError::Fatal("script exhausted".into()))
    }
}
