use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard, Weak};

use async_trait::async_trait;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use url::Url;

use super::jwt::{decode_jwt, sign_jwt, Jwk, Jwks};
use super::{
    claims_for_scopes, ClientRegistration, Flow, OidcError, ProviderConfig, CODE_TTL_SECS, ID_TOKEN_TTL_SECS,
    REGISTERED_CLAIMS, SESSION_TTL_SECS,
};
use crate::agent::{
    Agent, AgentHook, AgentMessage, ConnectionOffer, ConnectionState, ConnectionView, HookEvent, MessageType,
    ProblemReport, ProofPresentationBody,
};
use crate::clock::SharedClock;
use crate::codec::{b64url_decode, b64url_encode};
use crate::credentials::{
    verify_presentation, AttributeValue, NonceStore, ProofRequest, RequestedAttribute, VerifiedClaims, VerifyOptions,
};
use crate::identity::{self, Did, KeyPair, Signature};

pub const COOKIE_NAME: &str = "didauth_session";

const COOKIE_CONTEXT: &[u8] = b"didauth-session-cookie:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    PendingConnection,
    PendingProof,
    Proved,
    Denied,
    Consumed,
}

impl SessionStatus {
    fn can_move_to(self, to: SessionStatus) -> bool {
        use SessionStatus::*;
        matches!(
            (self, to),
            (PendingConnection, PendingProof) | (PendingProof, Proved) | (PendingProof, Denied) | (Proved, Consumed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthSession {
    pub session_id: String,
    pub client_id: String,
    pub flow: Flow,
    pub redirect_uri: String,
    pub state: Option<String>,
    pub nonce: Option<String>,
    pub requested_scopes: Vec<String>,
    pub status: SessionStatus,
    /// Provider-side pairwise DID of the connection used for the proof.
    pub connection_ref: Option<Did>,
    /// Holder's pairwise DID on that connection; becomes `sub`.
    pub sub: Option<Did>,
    pub proof_request: ProofRequest,
    pub proof_thread: Option<String>,
    pub offer_id: Option<String>,
    pub verified_claims: Option<VerifiedClaims>,
    pub code: Option<String>,
    pub redirect: Option<String>,
    pub created_at: i64,
    pub expires_at: i64,
}

impl AuthSession {
    fn transition(&mut self, to: SessionStatus, now: i64) -> Result<(), OidcError> {
        if now >= self.expires_at {
            return Err(OidcError::SessionExpired);
        }
        if !self.status.can_move_to(to) {
            return Err(OidcError::InvalidTransition { from: self.status, to });
        }
        self.status = to;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizeRequest {
    pub client_id: String,
    pub redirect_uri: String,
    pub response_type: String,
    #[serde(default)]
    pub scope: String,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub nonce: Option<String>,
}

/// What the browser gets from `/authorize` when login can proceed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginPage {
    pub session_id: String,
    pub status: SessionStatus,
    /// QR payload; absent when a cookie let the provider reuse a connection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer: Option<ConnectionOffer>,
    pub requested_attributes: Vec<String>,
    pub requested_predicates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthorizeOutcome {
    LoginPage(LoginPage),
    /// OIDC error response delivered to the client's redirect URI.
    Redirect(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub expired: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cookie: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    #[serde(default)]
    pub grant_type: String,
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub redirect_uri: Option<String>,
    #[serde(default)]
    pub client_id: String,
    #[serde(default)]
    pub client_secret: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub id_token: String,
    pub access_token: String,
    pub token_type: String,
    pub expires_in: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("invalid_client")]
    InvalidClient,
    #[error("invalid_grant: {0}")]
    InvalidGrant(String),
    #[error("unsupported_grant_type")]
    UnsupportedGrantType,
}

impl TokenError {
    pub fn code(&self) -> &'static str {
        match self {
            TokenError::InvalidClient => "invalid_client",
            TokenError::InvalidGrant(_) => "invalid_grant",
            TokenError::UnsupportedGrantType => "unsupported_grant_type",
        }
    }
}

struct IssuedCode {
    session_id: String,
    client_id: String,
    expires_at: i64,
}

struct IssuedToken {
    claims: Map<String, Value>,
    expires_at: i64,
}

/// Everything the provider may forget without breaking login: it holds no
/// user records, only in-flight sessions and short-lived grants.
#[derive(Default)]
struct Volatile {
    sessions: HashMap<String, AuthSession>,
    by_offer: HashMap<String, String>,
    by_nonce: HashMap<[u8; 16], String>,
    codes: HashMap<String, IssuedCode>,
    tokens: HashMap<String, IssuedToken>,
    nonces: Arc<NonceStore>,
}

pub struct Provider {
    config: ProviderConfig,
    key: KeyPair,
    agent: Arc<Agent>,
    clock: SharedClock,
    state: Mutex<Volatile>,
}

fn random_token() -> String {
    let mut b = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut b);
    b64url_encode(&b)
}

fn with_params(redirect_uri: &str, flow: Option<Flow>, params: &[(&str, &str)]) -> String {
    let mut url = Url::parse(redirect_uri).expect("registered redirect URIs are absolute URLs");
    if flow == Some(Flow::Implicit) {
        let mut ser = url::form_urlencoded::Serializer::new(String::new());
        for (k, v) in params {
            ser.append_pair(k, v);
        }
        url.set_fragment(Some(&ser.finish()));
    } else {
        let mut q = url.query_pairs_mut();
        for (k, v) in params {
            q.append_pair(k, v);
        }
    }
    url.into()
}

fn error_redirect(redirect_uri: &str, flow: Option<Flow>, error: &str, description: &str, state: Option<&str>) -> String {
    let mut params = vec![("error", error), ("error_description", description)];
    if let Some(s) = state {
        params.push(("state", s));
    }
    with_params(redirect_uri, flow, &params)
}

struct ProviderHook(Weak<Provider>);

#[async_trait]
impl AgentHook for ProviderHook {
    async fn on_connection(&self, offer_id: &str, connection: &ConnectionView) {
        if let Some(p) = self.0.upgrade() {
            p.on_connection(offer_id, connection).await;
        }
    }

    async fn on_message(&self, connection: &ConnectionView, message: &AgentMessage) -> Option<AgentMessage> {
        self.0.upgrade()?.on_message(connection, message)
    }
}

impl Provider {
    /// Creates the provider and installs it as `agent`'s hook.
    pub fn new(config: ProviderConfig, key: KeyPair, agent: Arc<Agent>) -> Arc<Self> {
        let clock = agent.registry().clock().clone();
        let provider = Arc::new(Provider { config, key, agent, clock, state: Mutex::new(Volatile::default()) });
        provider.agent.set_hook(Arc::new(ProviderHook(Arc::downgrade(&provider))));
        provider
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn issuer(&self) -> &str {
        &self.config.issuer
    }

    pub fn agent(&self) -> &Arc<Agent> {
        &self.agent
    }

    pub fn jwks(&self) -> Jwks {
        Jwks { keys: vec![Jwk::ed25519(&self.key.verkey())] }
    }

    pub fn discovery(&self) -> Value {
        let base = self.config.issuer.trim_end_matches('/');
        json!({
            "issuer": self.config.issuer,
            "authorization_endpoint": format!("{base}/authorize"),
            "token_endpoint": format!("{base}/token"),
            "userinfo_endpoint": format!("{base}/userinfo"),
            "jwks_uri": format!("{base}/jwks"),
            "response_types_supported": ["id_token", "code"],
            "subject_types_supported": ["pairwise"],
            "id_token_signing_alg_values_supported": ["EdDSA"],
            "scopes_supported": super::SCOPES,
            "token_endpoint_auth_methods_supported": ["client_secret_post", "client_secret_basic"],
        })
    }

    fn state(&self) -> MutexGuard<'_, Volatile> {
        self.state.lock().expect("provider state lock")
    }

    fn now(&self) -> i64 {
        self.clock.now()
    }

    fn client(&self, client_id: &str) -> Option<&ClientRegistration> {
        self.config.clients.iter().find(|c| c.client_id == client_id)
    }

    /// Drops sessions, codes, tokens and nonces. Client registrations and the
    /// agent's connections survive.
    pub fn wipe_volatile_state(&self) {
        *self.state() = Volatile::default();
    }

    pub fn session(&self, session_id: &str) -> Option<AuthSession> {
        self.state().sessions.get(session_id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.state().sessions.len()
    }

    pub fn session_view(&self, session_id: &str) -> Option<SessionView> {
        let s = self.session(session_id)?;
        let cookie = match (s.status, &s.connection_ref) {
            (SessionStatus::Proved | SessionStatus::Consumed, Some(conn)) => Some(self.session_cookie(conn)),
            _ => None,
        };
        Some(SessionView {
            session_id: s.session_id,
            status: s.status,
            expired: self.now() >= s.expires_at,
            redirect: s.redirect,
            cookie,
        })
    }

    /// Stateless cookie naming the provider's side of a pairwise connection.
    pub fn session_cookie(&self, connection: &Did) -> String {
        let mut msg = COOKIE_CONTEXT.to_vec();
        msg.extend_from_slice(connection.to_string().as_bytes());
        format!("{}.{}", connection, b64url_encode(self.key.sign(&msg).as_bytes()))
    }

    fn cookie_connection(&self, cookie: &str) -> Option<ConnectionView> {
        let (did, sig) = cookie.rsplit_once('.')?;
        let sig = Signature::from_slice(&b64url_decode(sig).ok()?).ok()?;
        let mut msg = COOKIE_CONTEXT.to_vec();
        msg.extend_from_slice(did.as_bytes());
        if !identity::verify(&self.key.verkey(), &msg, &sig) {
            return None;
        }
        let did: Did = did.parse().ok()?;
        self.agent.connection(&did).filter(|c| c.state == ConnectionState::Established)
    }

    pub async fn authorize(&self, req: &AuthorizeRequest, cookie: Option<&str>) -> Result<AuthorizeOutcome, OidcError> {
        let client = self.client(&req.client_id).ok_or_else(|| OidcError::UnknownClient(req.client_id.clone()))?;
        if !client.redirect_uris.iter().any(|u| u == &req.redirect_uri) {
            return Err(OidcError::UnregisteredRedirect);
        }
        let state = req.state.as_deref();
        let Some(flow) = Flow::from_response_type(&req.response_type) else {
            let msg = format!("unsupported response_type {}", req.response_type);
            return Ok(AuthorizeOutcome::Redirect(error_redirect(&req.redirect_uri, None, "invalid_request", &msg, state)));
        };
        let fail = |error: &str, msg: &str| {
            Ok(AuthorizeOutcome::Redirect(error_redirect(&req.redirect_uri, Some(flow), error, msg, state)))
        };
        if !client.allowed_flows.contains(&flow) {
            return fail("invalid_request", &format!("{flow} flow is not allowed for this client"));
        }
        let scopes: Vec<String> = req.scope.split_whitespace().map(str::to_owned).collect();
        if !scopes.iter().any(|s| s == "openid") {
            return fail("invalid_request", "scope must include openid");
        }
        let claims = match claims_for_scopes(&scopes) {
            Ok(c) => c,
            Err(e) => return fail("invalid_scope", &e.to_string()),
        };
        if flow == Flow::Implicit && req.nonce.as_deref().map_or(true, str::is_empty) {
            return fail("invalid_request", "nonce is required for the implicit flow");
        }
        let proof_request = ProofRequest::new(
            format!("login:{}", client.client_id),
            claims.iter().map(|c| RequestedAttribute::new(*c)).collect(),
            client.requested_predicates.clone(),
        )?;

        let now = self.now();
        let mut session = AuthSession {
            session_id: random_token(),
            client_id: client.client_id.clone(),
            flow,
            redirect_uri: req.redirect_uri.clone(),
            state: req.state.clone(),
            nonce: req.nonce.clone(),
            requested_scopes: scopes,
            status: SessionStatus::PendingConnection,
            connection_ref: None,
            sub: None,
            proof_request,
            proof_thread: None,
            offer_id: None,
            verified_claims: None,
            code: None,
            redirect: None,
            created_at: now,
            expires_at: now + SESSION_TTL_SECS,
        };
        let page = |s: &AuthSession, offer: Option<ConnectionOffer>| LoginPage {
            session_id: s.session_id.clone(),
            status: s.status,
            offer,
            requested_attributes: s.proof_request.requested_attributes.iter().map(|a| a.name.clone()).collect(),
            requested_predicates: s.proof_request.requested_predicates.clone(),
        };

        if let Some(conn) = cookie.and_then(|c| self.cookie_connection(c)) {
            let session_id = session.session_id.clone();
            session.connection_ref = Some(conn.my_did.clone());
            session.sub = Some(conn.their_did.clone());
            session.status = SessionStatus::PendingProof;
            self.insert_session(session);
            match self.dispatch_proof_request(&session_id).await {
                Ok(()) => {
                    let s = self.session(&session_id).ok_or(OidcError::UnknownSession)?;
                    return Ok(AuthorizeOutcome::LoginPage(page(&s, None)));
                }
                Err(e) => {
                    tracing::info!("cookie connection unusable, falling back to a new offer: {e}");
                    let mut st = self.state();
                    session = st.sessions.remove(&session_id).ok_or(OidcError::UnknownSession)?;
                    st.by_nonce.remove(&session.proof_request.nonce);
                    session.connection_ref = None;
                    session.sub = None;
                    session.status = SessionStatus::PendingConnection;
                }
            }
        }

        let offer = self.agent.create_connection_offer();
        session.offer_id = Some(offer.offer_id.clone());
        let out = page(&session, Some(offer.clone()));
        {
            let mut st = self.state();
            st.by_offer.insert(offer.offer_id.clone(), session.session_id.clone());
        }
        self.insert_session(session);
        Ok(AuthorizeOutcome::LoginPage(out))
    }

    fn insert_session(&self, session: AuthSession) {
        let mut st = self.state();
        st.by_nonce.insert(session.proof_request.nonce, session.session_id.clone());
        st.sessions.insert(session.session_id.clone(), session);
    }

    async fn dispatch_proof_request(&self, session_id: &str) -> Result<(), OidcError> {
        let (conn, request) = {
            let st = self.state();
            let s = st.sessions.get(session_id).ok_or(OidcError::UnknownSession)?;
            if s.status != SessionStatus::PendingProof {
                return Err(OidcError::InvalidTransition { from: s.status, to: SessionStatus::PendingProof });
            }
            st.nonces.register(&s.proof_request);
            (s.connection_ref.clone().ok_or(OidcError::UnknownSession)?, s.proof_request.clone())
        };
        let thread = self.agent.send_proof_request(&conn, &request).await?;
        if let Some(s) = self.state().sessions.get_mut(session_id) {
            s.proof_thread = Some(thread);
        }
        Ok(())
    }

    /// Sends a fresh proof request (new nonce) for a session still waiting on
    /// its proof, e.g. after the holder's first presentation was rejected.
    pub async fn resend_proof_request(&self, session_id: &str) -> Result<(), OidcError> {
        {
            let mut st = self.state();
            let s = st.sessions.get_mut(session_id).ok_or(OidcError::UnknownSession)?;
            if s.status != SessionStatus::PendingProof {
                return Err(OidcError::InvalidTransition { from: s.status, to: SessionStatus::PendingProof });
            }
            if self.now() >= s.expires_at {
                return Err(OidcError::SessionExpired);
            }
            let old = s.proof_request.clone();
            s.proof_request = ProofRequest::new(old.name, old.requested_attributes, old.requested_predicates)?;
            let nonce = s.proof_request.nonce;
            st.by_nonce.remove(&old.nonce);
            st.by_nonce.insert(nonce, session_id.to_owned());
        }
        self.dispatch_proof_request(session_id).await
    }

    /// A holder accepted the offer embedded in a login page.
    pub async fn on_connection(&self, offer_id: &str, connection: &ConnectionView) {
        let now = self.now();
        let session_id = {
            let mut st = self.state();
            let Some(id) = st.by_offer.remove(offer_id) else {
                return;
            };
            let Some(s) = st.sessions.get_mut(&id) else {
                return;
            };
            if let Err(e) = s.transition(SessionStatus::PendingProof, now) {
                tracing::info!("session {id}: {e}");
                return;
            }
            s.connection_ref = Some(connection.my_did.clone());
            s.sub = Some(connection.their_did.clone());
            id
        };
        if let Err(e) = self.dispatch_proof_request(&session_id).await {
            tracing::warn!("session {session_id}: proof request not delivered: {e}");
        }
    }

    /// Handles a PROOF_PRESENTATION or PROBLEM_REPORT; the returned message
    /// is the inline reply to the holder.
    pub fn on_message(&self, connection: &ConnectionView, message: &AgentMessage) -> Option<AgentMessage> {
        match message.msg_type {
            MessageType::ProofPresentation => {
                let reason = match self.on_presentation(connection, message) {
                    Ok(()) => return None,
                    Err(e) => e.to_string(),
                };
                tracing::info!("presentation rejected: {reason}");
                Some(AgentMessage::problem(message.thread_id.clone(), reason))
            }
            MessageType::ProblemReport => {
                let reason = message.body::<ProblemReport>().map(|r| r.reason).unwrap_or_default();
                if let Err(e) = self.on_denied(connection, &message.thread_id, &reason) {
                    tracing::info!("problem report ignored: {e}");
                }
                None
            }
            _ => None,
        }
    }

    pub async fn handle_event(&self, event: HookEvent) -> Option<AgentMessage> {
        match event {
            HookEvent::Connection { offer_id, connection } => {
                self.on_connection(&offer_id, &connection).await;
                None
            }
            HookEvent::Message { connection, message } => self.on_message(&connection, &message),
        }
    }

    fn on_presentation(&self, connection: &ConnectionView, message: &AgentMessage) -> Result<(), OidcError> {
        let body: ProofPresentationBody =
            message.body().map_err(|e| OidcError::InvalidRequest(format!("presentation body: {e}")))?;
        let p = body.presentation;
        let (session_id, request, nonces) = {
            let st = self.state();
            let id = st.by_nonce.get(&p.proof_request_nonce).cloned().ok_or(OidcError::UnknownSession)?;
            let s = st.sessions.get(&id).ok_or(OidcError::UnknownSession)?;
            if s.connection_ref.as_ref() != Some(&connection.my_did) {
                return Err(OidcError::InvalidRequest("presentation arrived on another connection".into()));
            }
            if s.status != SessionStatus::PendingProof {
                return Err(OidcError::InvalidTransition { from: s.status, to: SessionStatus::Proved });
            }
            if self.now() >= s.expires_at {
                return Err(OidcError::SessionExpired);
            }
            (id, s.proof_request.clone(), st.nonces.clone())
        };
        let wallet = self.agent.wallet_snapshot();
        let opts = VerifyOptions { pairwise: &wallet, trusted_issuers: self.config.trusted_issuers.as_ref() };
        let verified = verify_presentation(&p, &request, self.agent.registry(), &nonces, &opts)?;
        self.complete(&session_id, verified)
    }

    fn complete(&self, session_id: &str, verified: VerifiedClaims) -> Result<(), OidcError> {
        let now = self.now();
        let mut st = self.state();
        let s = st.sessions.get_mut(session_id).ok_or(OidcError::UnknownSession)?;
        s.transition(SessionStatus::Proved, now)?;
        s.verified_claims = Some(verified);
        let s = s.clone();
        let state = s.state.as_deref();
        let redirect = match s.flow {
            Flow::Implicit => {
                let (id_token, claims) = self.mint_id_token(&s, now);
                st.tokens.insert(id_token.clone(), IssuedToken { claims, expires_at: now + ID_TOKEN_TTL_SECS });
                let mut params = vec![("id_token", id_token.as_str())];
                params.extend(state.map(|v| ("state", v)));
                with_params(&s.redirect_uri, Some(Flow::Implicit), &params)
            }
            Flow::Code => {
                let code = random_token();
                st.codes.insert(
                    code.clone(),
                    IssuedCode { session_id: s.session_id.clone(), client_id: s.client_id.clone(), expires_at: now + CODE_TTL_SECS },
                );
                let mut params = vec![("code", code.as_str())];
                params.extend(state.map(|v| ("state", v)));
                let r = with_params(&s.redirect_uri, Some(Flow::Code), &params);
                st.sessions.get_mut(session_id).expect("present").code = Some(code.clone());
                r
            }
        };
        st.sessions.get_mut(session_id).expect("present").redirect = Some(redirect);
        Ok(())
    }

    fn on_denied(&self, connection: &ConnectionView, thread_id: &str, reason: &str) -> Result<(), OidcError> {
        let now = self.now();
        let mut st = self.state();
        let mine = |s: &&mut AuthSession| {
            s.status == SessionStatus::PendingProof && s.connection_ref.as_ref() == Some(&connection.my_did)
        };
        let by_thread = st
            .sessions
            .values_mut()
            .filter(mine)
            .find(|s| s.proof_thread.as_deref() == Some(thread_id))
            .map(|s| s.session_id.clone());
        let id = match by_thread {
            Some(id) => id,
            None => st
                .sessions
                .values_mut()
                .filter(mine)
                .max_by_key(|s| s.created_at)
                .map(|s| s.session_id.clone())
                .ok_or(OidcError::UnknownSession)?,
        };
        let s = st.sessions.get_mut(&id).expect("present");
        s.transition(SessionStatus::Denied, now)?;
        let desc = if reason.is_empty() { "the holder declined" } else { reason };
        s.redirect = Some(error_redirect(&s.redirect_uri, Some(s.flow), "access_denied", desc, s.state.as_deref()));
        Ok(())
    }

    /// `sub` plus the verified claims; no other values are ever added.
    fn user_claims(s: &AuthSession) -> Map<String, Value> {
        let mut claims = Map::new();
        if let Some(sub) = &s.sub {
            claims.insert("sub".into(), Value::String(sub.to_string()));
        }
        if let Some(v) = &s.verified_claims {
            for (name, value) in &v.claims {
                if !REGISTERED_CLAIMS.contains(&name.as_str()) {
                    claims.insert(name.clone(), value.to_json());
                }
            }
        }
        claims
    }

    fn mint_id_token(&self, s: &AuthSession, now: i64) -> (String, Map<String, Value>) {
        let user = Self::user_claims(s);
        let mut claims = user.clone();
        claims.insert("iss".into(), json!(self.config.issuer));
        claims.insert("aud".into(), json!(s.client_id));
        claims.insert("iat".into(), json!(now));
        claims.insert("exp".into(), json!(now + ID_TOKEN_TTL_SECS));
        if let Some(n) = &s.nonce {
            claims.insert("nonce".into(), json!(n));
        }
        (sign_jwt(&self.key, &claims), user)
    }

    pub fn token(&self, req: &TokenRequest) -> Result<TokenResponse, TokenError> {
        let client = self.client(&req.client_id).ok_or(TokenError::InvalidClient)?;
        match (&client.client_secret, &req.client_secret) {
            (Some(expected), Some(given)) if expected == given => {}
            _ => return Err(TokenError::InvalidClient),
        }
        if req.grant_type != "authorization_code" {
            return Err(TokenError::UnsupportedGrantType);
        }
        let now = self.now();
        let mut st = self.state();
        let issued = st.codes.remove(&req.code).ok_or_else(|| TokenError::InvalidGrant("unknown or used code".into()))?;
        if issued.client_id != client.client_id {
            return Err(TokenError::InvalidGrant("code was issued to another client".into()));
        }
        if now >= issued.expires_at {
            return Err(TokenError::InvalidGrant("code expired".into()));
        }
        let s = st
            .sessions
            .get_mut(&issued.session_id)
            .ok_or_else(|| TokenError::InvalidGrant("session is gone".into()))?;
        if let Some(uri) = &req.redirect_uri {
            if uri != &s.redirect_uri {
                return Err(TokenError::InvalidGrant("redirect_uri does not match".into()));
            }
        }
        if s.status != SessionStatus::Proved {
            return Err(TokenError::InvalidGrant("session is not proved".into()));
        }
        s.status = SessionStatus::Consumed;
        let s = s.clone();
        let (id_token, user) = self.mint_id_token(&s, now);
        let access_token = random_token();
        let expires_at = now + ID_TOKEN_TTL_SECS;
        st.tokens.insert(access_token.clone(), IssuedToken { claims: user.clone(), expires_at });
        st.tokens.insert(id_token.clone(), IssuedToken { claims: user, expires_at });
        Ok(TokenResponse { id_token, access_token, token_type: "Bearer".into(), expires_in: ID_TOKEN_TTL_SECS })
    }

    /// Claims for a bearer access token or ID token this provider issued.
    pub fn userinfo(&self, bearer: &str) -> Option<Map<String, Value>> {
        if bearer.contains('.') {
            let jwt = decode_jwt(bearer).ok()?;
            if !jwt.verify(&self.key.verkey()) {
                return None;
            }
        }
        let st = self.state();
        let t = st.tokens.get(bearer)?;
        (self.now() < t.expires_at).then(|| t.claims.clone())
    }

    /// Verified claims of a PROVED or CONSUMED session, keyed by name.
    pub fn verified_claims(&self, session_id: &str) -> Option<BTreeMap<String, AttributeValue>> {
        self.session(session_id)?.verified_claims.map(|v| v.claims)
    }
}
