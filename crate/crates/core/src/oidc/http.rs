//! Provider HTTP endpoints.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Form, Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::json;

use super::provider::{AuthorizeOutcome, AuthorizeRequest, Provider, TokenError, TokenRequest, COOKIE_NAME};
use super::OidcError;
use crate::agent::HookEvent;

fn oidc_error(status: StatusCode, error: &str, description: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": error, "error_description": description.to_string() }))).into_response()
}

fn cookie_value<'a>(headers: &'a HeaderMap, name: &str) -> Option<&'a str> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, _)| *k == name)
        .map(|(_, v)| v)
}

async fn discovery(State(p): State<Arc<Provider>>) -> Response {
    Json(p.discovery()).into_response()
}

async fn jwks(State(p): State<Arc<Provider>>) -> Response {
    Json(p.jwks()).into_response()
}

async fn authorize(State(p): State<Arc<Provider>>, headers: HeaderMap, Query(req): Query<AuthorizeRequest>) -> Response {
    match p.authorize(&req, cookie_value(&headers, COOKIE_NAME)).await {
        Ok(AuthorizeOutcome::LoginPage(page)) => Json(page).into_response(),
        Ok(AuthorizeOutcome::Redirect(location)) => {
            (StatusCode::FOUND, [(header::LOCATION, location)]).into_response()
        }
        Err(e @ (OidcError::UnknownClient(_) | OidcError::UnregisteredRedirect)) => {
            oidc_error(StatusCode::BAD_REQUEST, "invalid_request", e)
        }
        Err(e) => oidc_error(StatusCode::INTERNAL_SERVER_ERROR, "server_error", e),
    }
}

async fn session(State(p): State<Arc<Provider>>, Path(id): Path<String>) -> Response {
    let Some(view) = p.session_view(&id) else {
        return oidc_error(StatusCode::NOT_FOUND, "invalid_request", "unknown session");
    };
    match &view.cookie {
        Some(c) => {
            let set = format!("{COOKIE_NAME}={c}; Path=/; HttpOnly; SameSite=Lax");
            ([(header::SET_COOKIE, set)], Json(view)).into_response()
        }
        None => Json(view).into_response(),
    }
}

fn basic_auth(headers: &HeaderMap) -> Option<(String, String)> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let raw = STANDARD.decode(v.strip_prefix("Basic ")?).ok()?;
    let (id, secret) = std::str::from_utf8(&raw).ok()?.split_once(':')?;
    Some((id.to_owned(), secret.to_owned()))
}

async fn token(State(p): State<Arc<Provider>>, headers: HeaderMap, Form(mut req): Form<TokenRequest>) -> Response {
    if let Some((id, secret)) = basic_auth(&headers) {
        req.client_id = id;
        req.client_secret = Some(secret);
    }
    match p.token(&req) {
        Ok(resp) => ([(header::CACHE_CONTROL, "no-store")], Json(resp)).into_response(),
        Err(e) => {
            let status = if e == TokenError::InvalidClient { StatusCode::UNAUTHORIZED } else { StatusCode::BAD_REQUEST };
            oidc_error(status, e.code(), e)
        }
    }
}

async fn userinfo(State(p): State<Arc<Provider>>, headers: HeaderMap) -> Response {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match bearer.and_then(|b| p.userinfo(b.trim())) {
        Some(claims) => Json(claims).into_response(),
        None => (
            StatusCode::UNAUTHORIZED,
            [(header::WWW_AUTHENTICATE, "Bearer error=\"invalid_token\"")],
            Json(json!({ "error": "invalid_token" })),
        )
            .into_response(),
    }
}

async fn proof_callback(State(p): State<Arc<Provider>>, Json(event): Json<HookEvent>) -> Response {
    Json(p.handle_event(event).await).into_response()
}

pub fn router(provider: Arc<Provider>) -> Router {
    Router::new()
        .route("/.well-known/openid-configuration", get(discovery))
        .route("/jwks", get(jwks))
        .route("/authorize", get(authorize))
        .route("/session/:id", get(session))
        .route("/token", post(token))
        .route("/userinfo", get(userinfo))
        .route("/proof-callback", post(proof_callback))
        .with_state(provider)
}
