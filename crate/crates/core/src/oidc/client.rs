//! Relying-party side: ID token validation and a small HTTP client harness.

use std::time::Duration;

use serde_json::{Map, Value};
use thiserror::Error;
use url::Url;

use super::jwt::{decode_jwt, Jwks};
use super::{Flow, TokenResponse};
use crate::credentials::{check_type, AttributeValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdTokenError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("unsupported alg {0}")]
    UnsupportedAlg(String),
    #[error("no key with kid {0}")]
    UnknownKey(String),
    #[error("bad signature")]
    BadSignature,
    #[error("iss mismatch")]
    IssuerMismatch,
    #[error("aud mismatch")]
    AudienceMismatch,
    #[error("nonce mismatch")]
    NonceMismatch,
    #[error("token expired")]
    Expired,
    #[error("claim {0} has the wrong type")]
    ClaimType(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedToken<'a> {
    pub issuer: &'a str,
    pub client_id: &'a str,
    pub nonce: Option<&'a str>,
}

/// Accepts `raw` iff the signature, `iss`, `aud`, `nonce` and `exp` checks
/// all pass, returning its claims.
pub fn client_validate_id_token(
    raw: &str,
    expected: &ExpectedToken<'_>,
    jwks: &Jwks,
    now: i64,
) -> Result<Map<String, Value>, IdTokenError> {
    let jwt = decode_jwt(raw).map_err(IdTokenError::Malformed)?;
    if jwt.header.alg != "EdDSA" {
        return Err(IdTokenError::UnsupportedAlg(jwt.header.alg));
    }
    let key = jwks
        .find(&jwt.header.kid)
        .and_then(|k| k.verkey())
        .ok_or_else(|| IdTokenError::UnknownKey(jwt.header.kid.clone()))?;
    if !jwt.verify(&key) {
        return Err(IdTokenError::BadSignature);
    }
    let claims = jwt.claims;
    if claims.get("iss").and_then(Value::as_str) != Some(expected.issuer) {
        return Err(IdTokenError::IssuerMismatch);
    }
    let aud_ok = match claims.get("aud") {
        Some(Value::String(a)) => a == expected.client_id,
        Some(Value::Array(a)) => a.iter().any(|v| v.as_str() == Some(expected.client_id)),
        _ => false,
    };
    if !aud_ok {
        return Err(IdTokenError::AudienceMismatch);
    }
    if claims.get("nonce").and_then(Value::as_str) != expected.nonce {
        return Err(IdTokenError::NonceMismatch);
    }
    let exp = claims.get("exp").and_then(Value::as_i64).ok_or_else(|| IdTokenError::ClaimType("exp".into()))?;
    let iat = claims.get("iat").and_then(Value::as_i64).ok_or_else(|| IdTokenError::ClaimType("iat".into()))?;
    if exp <= iat {
        return Err(IdTokenError::ClaimType("exp".into()));
    }
    if now >= exp {
        return Err(IdTokenError::Expired);
    }
    if !claims.get("sub").is_some_and(Value::is_string) {
        return Err(IdTokenError::ClaimType("sub".into()));
    }
    for (name, value) in &claims {
        if super::REGISTERED_CLAIMS.contains(&name.as_str()) {
            continue;
        }
        let typed: AttributeValue =
            serde_json::from_value(value.clone()).map_err(|_| IdTokenError::ClaimType(name.clone()))?;
        check_type(name, &typed).map_err(|_| IdTokenError::ClaimType(name.clone()))?;
    }
    Ok(claims)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RedirectResult {
    IdToken { id_token: String, state: Option<String> },
    Code { code: String, state: Option<String> },
    Error { error: String, description: Option<String>, state: Option<String> },
}

#[derive(Debug, Error)]
pub enum RelyingPartyError {
    #[error("http: {0}")]
    Http(String),
    #[error("redirect not understood: {0}")]
    Redirect(String),
    #[error("state mismatch")]
    StateMismatch,
    #[error("provider returned {error}")]
    Provider { error: String, description: Option<String> },
    #[error(transparent)]
    Token(#[from] IdTokenError),
}

impl From<reqwest::Error> for RelyingPartyError {
    fn from(e: reqwest::Error) -> Self {
        RelyingPartyError::Http(e.to_string())
    }
}

/// A registered client talking to the provider over HTTP.
#[derive(Debug, Clone)]
pub struct RelyingParty {
    pub issuer: String,
    pub client_id: String,
    pub client_secret: Option<String>,
    pub redirect_uri: String,
    http: reqwest::Client,
}

impl RelyingParty {
    pub fn new(
        issuer: impl Into<String>,
        client_id: impl Into<String>,
        client_secret: Option<String>,
        redirect_uri: impl Into<String>,
    ) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .expect("reqwest client");
        RelyingParty {
            issuer: issuer.into(),
            client_id: client_id.into(),
            client_secret,
            redirect_uri: redirect_uri.into(),
            http,
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}{path}", self.issuer.trim_end_matches('/'))
    }

    pub fn authorize_url(&self, flow: Flow, scope: &str, state: &str, nonce: &str) -> String {
        let mut url = Url::parse(&self.endpoint("/authorize")).expect("issuer is a URL");
        url.query_pairs_mut()
            .append_pair("client_id", &self.client_id)
            .append_pair("redirect_uri", &self.redirect_uri)
            .append_pair("response_type", flow.response_type())
            .append_pair("scope", scope)
            .append_pair("state", state)
            .append_pair("nonce", nonce);
        url.into()
    }

    /// Reads an authorization response from either the fragment or the query.
    pub fn parse_redirect(location: &str) -> Result<RedirectResult, RelyingPartyError> {
        let url = Url::parse(location).map_err(|e| RelyingPartyError::Redirect(e.to_string()))?;
        let mut params: Vec<(String, String)> = url.query_pairs().into_owned().collect();
        if let Some(f) = url.fragment() {
            params.extend(url::form_urlencoded::parse(f.as_bytes()).into_owned());
        }
        let get = |k: &str| params.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone());
        let state = get("state");
        if let Some(error) = get("error") {
            return Ok(RedirectResult::Error { error, description: get("error_description"), state });
        }
        if let Some(id_token) = get("id_token") {
            return Ok(RedirectResult::IdToken { id_token, state });
        }
        if let Some(code) = get("code") {
            return Ok(RedirectResult::Code { code, state });
        }
        Err(RelyingPartyError::Redirect("no id_token, code or error".into()))
    }

    pub async fn fetch_jwks(&self) -> Result<Jwks, RelyingPartyError> {
        Ok(self.http.get(self.endpoint("/jwks")).send().await?.error_for_status()?.json().await?)
    }

    pub async fn exchange_code(&self, code: &str) -> Result<TokenResponse, RelyingPartyError> {
        let mut form = vec![
            ("grant_type", "authorization_code"),
            ("code", code),
            ("redirect_uri", self.redirect_uri.as_str()),
            ("client_id", self.client_id.as_str()),
        ];
        if let Some(s) = &self.client_secret {
            form.push(("client_secret", s));
        }
        let resp = self.http.post(self.endpoint("/token")).form(&form).send().await?;
        if !resp.status().is_success() {
            let body: Value = resp.json().await.unwrap_or(Value::Null);
            return Err(RelyingPartyError::Provider {
                error: body["error"].as_str().unwrap_or("unknown").to_owned(),
                description: body["error_description"].as_str().map(str::to_owned),
            });
        }
        Ok(resp.json().await?)
    }

    pub async fn userinfo(&self, bearer: &str) -> Result<Map<String, Value>, RelyingPartyError> {
        let resp = self.http.get(self.endpoint("/userinfo")).bearer_auth(bearer).send().await?;
        Ok(resp.error_for_status()?.json().await?)
    }

    /// Completes a login from the provider's final redirect: checks `state`,
    /// redeems a code if needed and validates the ID token.
    pub async fn finish(
        &self,
        location: &str,
        state: &str,
        nonce: &str,
        now: i64,
    ) -> Result<(String, Map<String, Value>), RelyingPartyError> {
        let (raw, got_state) = match Self::parse_redirect(location)? {
            RedirectResult::Error { error, description, .. } => {
                return Err(RelyingPartyError::Provider { error, description })
            }
            RedirectResult::IdToken { id_token, state } => (id_token, state),
            RedirectResult::Code { code, state: s } => {
                if s.as_deref() != Some(state) {
                    return Err(RelyingPartyError::StateMismatch);
                }
                (self.exchange_code(&code).await?.id_token, s)
            }
        };
        if got_state.as_deref() != Some(state) {
            return Err(RelyingPartyError::StateMismatch);
        }
        let jwks = self.fetch_jwks().await?;
        let expected = ExpectedToken { issuer: &self.issuer, client_id: &self.client_id, nonce: Some(nonce) };
        let claims = client_validate_id_token(&raw, &expected, &jwks, now)?;
        Ok((raw, claims))
    }
}
