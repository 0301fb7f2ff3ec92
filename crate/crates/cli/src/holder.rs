//! Holder consent over the agent HTTP API, the same calls a wallet UI makes.

use std::time::Duration;

use didauth_core::agent::{ConnectionOffer, ConnectionView, ConsentOutcome, CredentialView, PendingView};
use serde::de::DeserializeOwned;
use serde_json::json;

#[derive(Debug, Clone)]
pub struct HolderApi {
    base: String,
    http: reqwest::Client,
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, String> {
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().await.unwrap_or_default();
        return Err(format!("{status}: {body}"));
    }
    resp.json().await.map_err(|e| e.to_string())
}

impl HolderApi {
    pub fn new(base: impl Into<String>) -> Self {
        HolderApi { base: base.into(), http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub async fn accept(&self, offer: &ConnectionOffer) -> Result<ConnectionView, String> {
        let resp = self
            .http
            .post(format!("{}/connections/accept", self.base))
            .body(offer.to_json())
            .send()
            .await
            .map_err(|e| e.to_string())?;
        decode(resp).await
    }

    pub async fn pending(&self) -> Result<Vec<PendingView>, String> {
        decode(self.http.get(format!("{}/pending", self.base)).send().await.map_err(|e| e.to_string())?).await
    }

    /// Polls until an item of `kind` is queued.
    pub async fn wait_pending(&self, kind: &str, timeout: Duration) -> Result<PendingView, String> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if let Some(p) = self.pending().await?.into_iter().find(|p| p.kind == kind) {
                return Ok(p);
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(format!("no pending {kind} within {timeout:?}"));
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    pub async fn approve(&self, id: &str, disclosed: Option<&[String]>) -> Result<ConsentOutcome, String> {
        let mut req = self.http.post(format!("{}/pending/{id}/approve", self.base));
        if let Some(d) = disclosed {
            req = req.json(&json!({ "disclosed": d }));
        }
        decode(req.send().await.map_err(|e| e.to_string())?).await
    }

    pub async fn deny(&self, id: &str) -> Result<ConsentOutcome, String> {
        decode(self.http.post(format!("{}/pending/{id}/deny", self.base)).send().await.map_err(|e| e.to_string())?).await
    }

    pub async fn credentials(&self) -> Result<Vec<CredentialView>, String> {
        decode(self.http.get(format!("{}/credentials", self.base)).send().await.map_err(|e| e.to_string())?).await
    }
}
