//! Read-only HTTP view of the ledger.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use super::{Registry, RegistryError};
use crate::identity::Did;

fn error_response(err: RegistryError) -> Response {
    let status = match err {
        RegistryError::NotFound(_) | RegistryError::OutOfRange(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_REQUEST,
    };
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

async fn get_txn(State(reg): State<Arc<Registry>>, Path(seq): Path<u64>) -> Response {
    match reg.get_transaction(seq) {
        Ok(txn) => Json(txn).into_response(),
        Err(e) => error_response(e),
    }
}

async fn get_nym(State(reg): State<Arc<Registry>>, Path(did): Path<String>) -> Response {
    let did: Did = match did.parse() {
        Ok(d) => d,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))).into_response(),
    };
    match reg.resolve_nym(&did) {
        Ok(rec) => Json(rec).into_response(),
        Err(e) => error_response(e),
    }
}

async fn get_alias(State(reg): State<Arc<Registry>>, Path(alias): Path<String>) -> Response {
    match reg.lookup_alias(&alias) {
        Ok(rec) => Json(rec).into_response(),
        Err(e) => error_response(e),
    }
}

/// `GET /ledger/txn/{seq}`, `GET /ledger/nym/{did}`, `GET /ledger/alias/{alias}`.
pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/ledger/txn/:seq", get(get_txn))
        .route("/ledger/nym/:did", get(get_nym))
        .route("/ledger/alias/:alias", get(get_alias))
        .with_state(registry)
}
