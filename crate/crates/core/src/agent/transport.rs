use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;

use super::Agent;
use crate::identity::AuthcryptEnvelope;

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("endpoint {0} unreachable: {1}")]
    Unreachable(String, String),
    #[error("peer rejected envelope ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("peer sent a malformed reply: {0}")]
    BadReply(String),
}

impl TransportError {
    /// Transport failures are worth retrying; rejections are not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Unreachable(..))
    }
}

/// Delivers an envelope to a peer's inbox; the peer may answer inline.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn deliver(&self, endpoint: &str, envelope: &AuthcryptEnvelope)
        -> Result<Option<AuthcryptEnvelope>, TransportError>;
}

/// `POST {endpoint}/inbox` over HTTP.
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("reqwest client");
        HttpTransport { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

pub fn inbox_url(endpoint: &str) -> String {
    format!("{}/inbox", endpoint.trim_end_matches('/'))
}

#[async_trait]
impl Transport for HttpTransport {
    async fn deliver(
        &self,
        endpoint: &str,
        envelope: &AuthcryptEnvelope,
    ) -> Result<Option<AuthcryptEnvelope>, TransportError> {
        let resp = self
            .client
            .post(inbox_url(endpoint))
            .header("content-type", "application/json")
            .body(envelope.to_json())
            .send()
            .await
            .map_err(|e| TransportError::Unreachable(endpoint.to_owned(), e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| TransportError::Unreachable(endpoint.to_owned(), e.to_string()))?;
        if !status.is_success() {
            let message = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(str::to_owned))
                .unwrap_or(text);
            return Err(TransportError::Rejected { status: status.as_u16(), message });
        }
        if text.trim().is_empty() {
            return Ok(None);
        }
        AuthcryptEnvelope::from_json(&text)
            .map(Some)
            .map_err(|e| TransportError::BadReply(e.to_string()))
    }
}

/// In-process delivery between agents registered by endpoint.
#[derive(Default)]
pub struct LocalTransport {
    agents: RwLock<HashMap<String, Weak<Agent>>>,
}

impl LocalTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, agent: &Arc<Agent>) {
        self.agents
            .write()
            .expect("transport lock")
            .insert(agent.endpoint().to_owned(), Arc::downgrade(agent));
    }
}

#[async_trait]
impl Transport for LocalTransport {
    async fn deliver(
        &self,
        endpoint: &str,
        envelope: &AuthcryptEnvelope,
    ) -> Result<Option<AuthcryptEnvelope>, TransportError> {
        let agent = self
            .agents
            .read()
            .expect("transport lock")
            .get(endpoint)
            .and_then(Weak::upgrade)
            .ok_or_else(|| TransportError::Unreachable(endpoint.to_owned(), "no such agent".into()))?;
        agent
            .receive_envelope(envelope)
            .await
            .map_err(|e| TransportError::Rejected { status: e.status(), message: e.to_string() })
    }
}

/// Wraps another transport and keeps a copy of every envelope on the wire.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    log: Mutex<Vec<WireRecord>>,
}

#[derive(Debug, Clone)]
pub struct WireRecord {
    pub endpoint: String,
    pub request: String,
    pub reply: Option<String>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Arc<Self> {
        Arc::new(RecordingTransport { inner, log: Mutex::new(Vec::new()) })
    }

    pub fn records(&self) -> Vec<WireRecord> {
        self.log.lock().expect("wire log").clone()
    }
}

#[async_trait]
impl Transport for RecordingTransport {
    async fn deliver(
        &self,
        endpoint: &str,
        envelope: &AuthcryptEnvelope,
    ) -> Result<Option<AuthcryptEnvelope>, TransportError> {
        let reply = self.inner.deliver(endpoint, envelope).await;
        self.log.lock().expect("wire log").push(WireRecord {
            endpoint: endpoint.to_owned(),
            request: envelope.to_json(),
            reply: reply.as_ref().ok().and_then(|r| r.as_ref().map(AuthcryptEnvelope::to_json)),
        });
        reply
    }
}
