use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{AgentMessage, ConnectionView};

/// Protocol events an agent hands to its controller.
#[async_trait]
pub trait AgentHook: Send + Sync {
    /// A peer accepted one of our offers.
    async fn on_connection(&self, _offer_id: &str, _connection: &ConnectionView) {}

    /// A PROOF_PRESENTATION or PROBLEM_REPORT arrived. A returned message is
    /// sent back to the peer as the inline reply.
    async fn on_message(&self, _connection: &ConnectionView, _message: &AgentMessage) -> Option<AgentMessage> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HookEvent {
    Connection { offer_id: String, connection: ConnectionView },
    Message { connection: ConnectionView, message: AgentMessage },
}

/// Forwards events as JSON POSTs to a controller URL, e.g. a provider's
/// `/proof-callback`.
pub struct HttpCallbackHook {
    url: String,
    client: reqwest::Client,
}

impl HttpCallbackHook {
    pub fn new(url: impl Into<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("reqwest client");
        HttpCallbackHook { url: url.into(), client }
    }

    async fn post(&self, event: &HookEvent) -> Option<AgentMessage> {
        let resp = match self.client.post(&self.url).json(event).send().await {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!("callback to {} failed: {e}", self.url);
                return None;
            }
        };
        if !resp.status().is_success() {
            tracing::warn!("callback to {} returned {}", self.url, resp.status());
            return None;
        }
        let text = resp.text().await.ok()?;
        if text.trim().is_empty() || text.trim() == "null" {
            return None;
        }
        serde_json::from_str(&text).ok()
    }
}

#[async_trait]
impl AgentHook for HttpCallbackHook {
    async fn on_connection(&self, offer_id: &str, connection: &ConnectionView) {
        self.post(&HookEvent::Connection { offer_id: offer_id.to_owned(), connection: connection.clone() })
            .await;
    }

    async fn on_message(&self, connection: &ConnectionView, message: &AgentMessage) -> Option<AgentMessage> {
        self.post(&HookEvent::Message { connection: connection.clone(), message: message.clone() })
            .await
    }
}
