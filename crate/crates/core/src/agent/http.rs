//! Agent HTTP API, used by the CLI and the wallet UI.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Agent, AgentError, ConnectionOffer, Decision};
use crate::identity::AuthcryptEnvelope;

fn error_response(err: &AgentError) -> Response {
    let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::BAD_REQUEST);
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

fn bad_request(msg: impl std::fmt::Display) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": msg.to_string() }))).into_response()
}

async fn create_offer(State(agent): State<Arc<Agent>>) -> Response {
    Json(agent.create_connection_offer()).into_response()
}

async fn accept_offer(State(agent): State<Arc<Agent>>, body: Bytes) -> Response {
    let offer = match std::str::from_utf8(&body).map_err(|e| e.to_string()).and_then(|s| {
        ConnectionOffer::from_json(s).map_err(|e| e.to_string())
    }) {
        Ok(o) => o,
        Err(e) => return bad_request(e),
    };
    match agent.accept_connection_offer(&offer).await {
        Ok(view) => Json(view).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn inbox(State(agent): State<Arc<Agent>>, body: Bytes) -> Response {
    let env = match std::str::from_utf8(&body)
        .map_err(|e| e.to_string())
        .and_then(|s| AuthcryptEnvelope::from_json(s).map_err(|e| e.to_string()))
    {
        Ok(env) => env,
        Err(e) => return bad_request(e),
    };
    match agent.receive_envelope(&env).await {
        Ok(Some(reply)) => (StatusCode::OK, [("content-type", "application/json")], reply.to_json()).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error_response(&e),
    }
}

async fn list_pending(State(agent): State<Arc<Agent>>) -> Response {
    Json(agent.pending()).into_response()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproveBody {
    #[serde(default)]
    disclosed: Option<BTreeSet<String>>,
    #[serde(default)]
    credential_id: Option<String>,
}

async fn approve(State(agent): State<Arc<Agent>>, Path(id): Path<String>, body: Bytes) -> Response {
    let parsed: ApproveBody = if body.is_empty() {
        ApproveBody::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(b) => b,
            Err(e) => return bad_request(e),
        }
    };
    let decision = Decision::Approve { disclosed: parsed.disclosed, credential_id: parsed.credential_id };
    match agent.respond(&id, decision).await {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn deny(State(agent): State<Arc<Agent>>, Path(id): Path<String>) -> Response {
    match agent.respond(&id, Decision::Deny).await {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn list_credentials(State(agent): State<Arc<Agent>>) -> Response {
    Json(agent.credentials()).into_response()
}

async fn list_connections(State(agent): State<Arc<Agent>>) -> Response {
    Json(agent.connections()).into_response()
}

pub fn router(agent: Arc<Agent>) -> Router {
    Router::new()
        .route("/connections/offer", post(create_offer))
        .route("/connections/accept", post(accept_offer))
        .route("/connections", get(list_connections))
        .route("/inbox", post(inbox))
        .route("/pending", get(list_pending))
        .route("/pending/:id/approve", post(approve))
        .route("/pending/:id/deny", post(deny))
        .route("/credentials", get(list_credentials))
        .with_state(agent)
}
