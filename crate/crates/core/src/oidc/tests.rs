use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::*;
use crate::agent::{Agent, AgentConfig, AgentMessage, Decision, LocalTransport, MessageType, ProofPresentationBody};
use crate::clock::FixedClock;
use crate::codec::b64url_encode;
use crate::credentials::{
    create_presentation, register_claim_def, register_schema, AttributeValue, ProofRequest, OIDC_STANDARD_CLAIMS,
};
use crate::identity::{Identity, KeyPair};
use crate::registry::{GenesisFile, NymPayload, Registry, Role, TxnPayload};

const T2020: i64 = 1_592_179_200;
const RP: &str = "https://wine.example/cb";
const ISSUER_URL: &str = "https://op.example";

struct World {
    registry: Arc<Registry>,
    clock: Arc<FixedClock>,
    transport: Arc<LocalTransport>,
    issuer_id: Identity,
    claim_def: u64,
}

impl World {
    fn new() -> Self {
        let trustee = Identity::from_seed([5u8; 32]);
        let clock = FixedClock::shared(T2020);
        let registry = Arc::new(
            Registry::from_genesis(GenesisFile::create(&[(&trustee.keypair, None)], T2020), clock.clone()).unwrap(),
        );
        let issuer_id = Identity::generate();
        registry
            .submit(
                &trustee.did,
                &trustee.keypair,
                TxnPayload::Nym(NymPayload {
                    dest: issuer_id.did.clone(),
                    verkey: issuer_id.verkey(),
                    alias: None,
                    role: Role::Endorser,
                }),
            )
            .unwrap();
        let attrs: Vec<&str> =
            OIDC_STANDARD_CLAIMS.iter().copied().filter(|c| *c != "sub").chain(["over_18"]).collect();
        let schema = register_schema(&registry, &issuer_id, "passport", "1.0", &attrs).unwrap();
        let claim_def = register_claim_def(&registry, &issuer_id, schema, "default").unwrap();
        World { registry, clock, transport: LocalTransport::new(), issuer_id, claim_def }
    }

    fn agent(&self, name: &str) -> Arc<Agent> {
        let agent =
            Agent::new(AgentConfig::new(name, format!("local://{name}")), self.registry.clone(), self.transport.clone())
                .unwrap();
        self.transport.register(&agent);
        agent
    }

    fn provider_with(&self, name: &str, trusted: Option<BTreeSet<crate::identity::Did>>) -> Arc<Provider> {
        let config = ProviderConfig {
            issuer: format!("https://{name}.example"),
            clients: vec![ClientRegistration {
                client_id: "wineshop".into(),
                client_secret: Some("s3cret".into()),
                redirect_uris: vec![RP.into()],
                allowed_flows: [Flow::Implicit, Flow::Code].into(),
                requested_predicates: vec!["over_18".into()],
            }],
            trusted_issuers: trusted,
        };
        Provider::new(config, KeyPair::generate(), self.agent(name))
    }

    fn provider(&self) -> Arc<Provider> {
        let p = self.provider_with("op", Some([self.issuer_id.did.clone()].into()));
        assert_eq!(p.issuer(), ISSUER_URL);
        p
    }

    /// A holder agent with a passport issued by the test issuer.
    async fn jane(&self) -> Arc<Agent> {
        let issuer = self.agent("issuer");
        issuer.set_issuer(self.issuer_id.clone()).unwrap();
        let jane = self.agent("jane");
        let offer = issuer.create_connection_offer();
        let j_side = jane.accept_connection_offer(&offer).await.unwrap();
        issuer.offer_credential(&j_side.their_did, self.claim_def, passport_values()).await.unwrap();
        let pending = jane.pending();
        jane.respond(&pending[0].id, Decision::approve()).await.unwrap();
        assert_eq!(jane.credentials().len(), 1);
        jane
    }
}

fn passport_values() -> BTreeMap<String, AttributeValue> {
    let mut v = BTreeMap::new();
    for name in OIDC_STANDARD_CLAIMS.iter().filter(|c| **c != "sub") {
        let value = match *name {
            "email_verified" | "phone_number_verified" => AttributeValue::Bool(true),
            "updated_at" => AttributeValue::from(1_590_000_000i64),
            "address" => json!({"country": "NL"}).as_object().unwrap().clone().into(),
            "birthdate" => AttributeValue::from("1990-01-01"),
            "email" => AttributeValue::from("jane@example.org"),
            other => AttributeValue::from(format!("jane-{other}")),
        };
        v.insert(name.to_string(), value);
    }
    v
}

fn authz(flow: Flow, scope: &str, state: &str, nonce: &str) -> AuthorizeRequest {
    AuthorizeRequest {
        client_id: "wineshop".into(),
        redirect_uri: RP.into(),
        response_type: flow.response_type().into(),
        scope: scope.into(),
        state: Some(state.into()),
        nonce: Some(nonce.into()),
    }
}

fn page(outcome: AuthorizeOutcome) -> LoginPage {
    match outcome {
        AuthorizeOutcome::LoginPage(p) => p,
        AuthorizeOutcome::Redirect(r) => panic!("unexpected redirect {r}"),
    }
}

fn redirect(outcome: AuthorizeOutcome) -> String {
    match outcome {
        AuthorizeOutcome::Redirect(r) => r,
        AuthorizeOutcome::LoginPage(p) => panic!("unexpected page {p:?}"),
    }
}

/// Runs the two-step login (scan offer, approve) and returns the session id.
async fn login(p: &Provider, jane: &Agent, req: &AuthorizeRequest, cookie: Option<&str>) -> String {
    let lp = page(p.authorize(req, cookie).await.unwrap());
    if let Some(offer) = &lp.offer {
        jane.accept_connection_offer(offer).await.unwrap();
    }
    let pending: Vec<_> = jane.pending().into_iter().filter(|x| x.kind == "proof_request").collect();
    assert_eq!(pending.len(), 1);
    jane.respond(&pending[0].id, Decision::approve()).await.unwrap();
    lp.session_id
}

fn expected(nonce: &str) -> ExpectedToken<'_> {
    ExpectedToken { issuer: ISSUER_URL, client_id: "wineshop", nonce: Some(nonce) }
}

fn fragment_token(location: &str) -> (String, Option<String>) {
    match RelyingParty::parse_redirect(location).unwrap() {
        RedirectResult::IdToken { id_token, state } => (id_token, state),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scope_mapping() {
    assert_eq!(claims_for_scopes(&["openid", "email"]).unwrap(), vec!["email", "email_verified"]);
    assert!(claims_for_scopes(&["openid"]).unwrap().is_empty());
    let all = claims_for_scopes(&SCOPES).unwrap();
    let oracle: Vec<&str> = OIDC_STANDARD_CLAIMS.iter().copied().filter(|c| *c != "sub").collect();
    assert_eq!(all, oracle);
    assert_eq!(all.len(), 18);
    assert!(matches!(claims_for_scopes(&["openid", "wallet"]), Err(OidcError::UnknownScope(s)) if s == "wallet"));
    assert_eq!(claims_for_scopes(&["email", "email", "phone"]).unwrap().len(), 4);
}

#[tokio::test]
async fn first_visit_gets_an_offer() {
    let w = World::new();
    let p = w.provider();
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid email", "s1", "n1"), None).await.unwrap());
    assert!(lp.offer.is_some());
    assert_eq!(lp.status, SessionStatus::PendingConnection);
    assert_eq!(lp.requested_attributes, vec!["email", "email_verified"]);
    assert_eq!(lp.requested_predicates, vec!["over_18"]);
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::PendingConnection);
}

#[tokio::test]
async fn bad_client_or_redirect_creates_no_session() {
    let w = World::new();
    let p = w.provider();
    let mut req = authz(Flow::Implicit, "openid", "s", "n");
    req.redirect_uri = "https://wine.example/cb/".into();
    assert!(matches!(p.authorize(&req, None).await, Err(OidcError::UnregisteredRedirect)));
    req.redirect_uri = "https://evil.example/cb".into();
    assert!(matches!(p.authorize(&req, None).await, Err(OidcError::UnregisteredRedirect)));
    let mut req = authz(Flow::Implicit, "openid", "s", "n");
    req.client_id = "nobody".into();
    assert!(matches!(p.authorize(&req, None).await, Err(OidcError::UnknownClient(_))));
    assert_eq!(p.session_count(), 0);
}

#[tokio::test]
async fn invalid_requests_redirect_with_error() {
    let w = World::new();
    let mut config = w.provider().config().clone();
    config.clients[0].allowed_flows = [Flow::Code].into();
    let p = Provider::new(config, KeyPair::generate(), w.agent("op2"));

    let r = redirect(p.authorize(&authz(Flow::Implicit, "openid", "st", "n"), None).await.unwrap());
    assert!(r.starts_with("https://wine.example/cb#"));
    assert!(matches!(RelyingParty::parse_redirect(&r).unwrap(),
        RedirectResult::Error { error, state, .. } if error == "invalid_request" && state.as_deref() == Some("st")));

    let mut req = authz(Flow::Code, "openid", "st", "n");
    req.response_type = "token".into();
    let r = redirect(p.authorize(&req, None).await.unwrap());
    assert!(r.contains("?error=invalid_request"));

    let r = redirect(p.authorize(&authz(Flow::Code, "email", "st", "n"), None).await.unwrap());
    assert!(r.contains("error=invalid_request"));
    let r = redirect(p.authorize(&authz(Flow::Code, "openid wallet", "st", "n"), None).await.unwrap());
    assert!(r.contains("error=invalid_scope"));
    assert_eq!(p.session_count(), 0);

    let p = w.provider();
    let mut req = authz(Flow::Implicit, "openid", "st", "n");
    req.nonce = None;
    let r = redirect(p.authorize(&req, None).await.unwrap());
    assert!(r.contains("#error=invalid_request"));
}

#[tokio::test]
async fn implicit_login_mints_token_from_verified_claims() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let id = login(&p, &jane, &authz(Flow::Implicit, "openid email", "xyz", "n-123"), None).await;

    let s = p.session(&id).unwrap();
    assert_eq!(s.status, SessionStatus::Proved);
    let view = p.session_view(&id).unwrap();
    assert!(view.cookie.is_some());
    let location = view.redirect.unwrap();
    assert!(location.starts_with("https://wine.example/cb#id_token="));
    let (token, state) = fragment_token(&location);
    assert_eq!(state.as_deref(), Some("xyz"));
    assert_eq!(token.split('.').count(), 3);

    let claims = client_validate_id_token(&token, &expected("n-123"), &p.jwks(), T2020).unwrap();
    assert_eq!(claims["nonce"], "n-123");
    assert_eq!(claims["email"], "jane@example.org");
    assert_eq!(claims["over_18"], true);
    assert_eq!(claims["aud"], "wineshop");
    assert_eq!(claims["sub"], s.sub.as_ref().unwrap().to_string());
    assert_eq!(claims["exp"].as_i64().unwrap() - claims["iat"].as_i64().unwrap(), ID_TOKEN_TTL_SECS);

    // Provenance: every non-registered claim is exactly a verified value.
    let verified = p.verified_claims(&id).unwrap();
    let from_token: BTreeMap<String, Value> = claims
        .iter()
        .filter(|(k, _)| !REGISTERED_CLAIMS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let from_proof: BTreeMap<String, Value> = verified.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    assert_eq!(from_token, from_proof);
    assert_eq!(from_proof.keys().collect::<Vec<_>>(), vec!["email", "email_verified", "over_18"]);

    let info = p.userinfo(&token).unwrap();
    for (k, v) in &info {
        assert_eq!(&claims[k], v);
    }
    assert_eq!(info.len(), 4);
    assert!(p.userinfo("nope").is_none());
}

#[tokio::test]
async fn code_flow_is_single_use() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let id = login(&p, &jane, &authz(Flow::Code, "openid email", "st-9", "n-9"), None).await;
    let location = p.session_view(&id).unwrap().redirect.unwrap();
    let RedirectResult::Code { code, state } = RelyingParty::parse_redirect(&location).unwrap() else {
        panic!("{location}");
    };
    assert!(location.starts_with("https://wine.example/cb?code="));
    assert_eq!(state.as_deref(), Some("st-9"));

    let mut req = TokenRequest {
        grant_type: "authorization_code".into(),
        code: code.clone(),
        redirect_uri: Some(RP.into()),
        client_id: "wineshop".into(),
        client_secret: Some("wrong".into()),
    };
    assert_eq!(p.token(&req), Err(TokenError::InvalidClient));
    req.client_secret = None;
    assert_eq!(p.token(&req), Err(TokenError::InvalidClient));
    req.client_secret = Some("s3cret".into());
    let resp = p.token(&req).unwrap();
    assert_eq!(resp.token_type, "Bearer");
    let claims = client_validate_id_token(&resp.id_token, &expected("n-9"), &p.jwks(), T2020).unwrap();
    assert_eq!(claims["aud"], "wineshop");
    assert_eq!(claims["email"], "jane@example.org");
    assert_eq!(p.session(&id).unwrap().status, SessionStatus::Consumed);
    assert!(matches!(p.token(&req), Err(TokenError::InvalidGrant(_))));
    assert_eq!(p.userinfo(&resp.access_token).unwrap()["email"], "jane@example.org");
}

#[tokio::test]
async fn code_expires_after_a_minute() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let id = login(&p, &jane, &authz(Flow::Code, "openid", "s", "n"), None).await;
    let code = p.session(&id).unwrap().code.unwrap();
    w.clock.advance(CODE_TTL_SECS);
    let req = TokenRequest {
        grant_type: "authorization_code".into(),
        code,
        redirect_uri: None,
        client_id: "wineshop".into(),
        client_secret: Some("s3cret".into()),
    };
    assert_eq!(p.token(&req), Err(TokenError::InvalidGrant("code expired".into())));
}

#[tokio::test]
async fn denial_redirects_with_access_denied() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid email", "st", "n"), None).await.unwrap());
    jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    let pending = jane.pending();
    jane.respond(&pending[0].id, Decision::Deny).await.unwrap();
    let view = p.session_view(&lp.session_id).unwrap();
    assert_eq!(view.status, SessionStatus::Denied);
    assert!(view.cookie.is_none());
    assert!(matches!(RelyingParty::parse_redirect(&view.redirect.unwrap()).unwrap(),
        RedirectResult::Error { error, .. } if error == "access_denied"));
}

#[tokio::test]
async fn returning_user_proves_in_one_step_with_stable_sub() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let first = login(&p, &jane, &authz(Flow::Implicit, "openid email", "a", "n1"), None).await;
    let cookie = p.session_view(&first).unwrap().cookie.unwrap();
    let connections = jane.connections().len();

    let lp = page(p.authorize(&authz(Flow::Implicit, "openid email", "b", "n2"), Some(&cookie)).await.unwrap());
    assert!(lp.offer.is_none());
    assert_eq!(lp.status, SessionStatus::PendingProof);
    let pending = jane.pending();
    assert_eq!(pending.len(), 1);
    jane.respond(&pending[0].id, Decision::approve()).await.unwrap();
    assert_eq!(jane.connections().len(), connections);

    let second = p.session(&lp.session_id).unwrap();
    assert_eq!(second.status, SessionStatus::Proved);
    assert_eq!(second.sub, p.session(&first).unwrap().sub);

    // A forged cookie falls back to a fresh offer.
    let forged = format!("{}x", &cookie[..cookie.len() - 1]);
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid", "c", "n3"), Some(&forged)).await.unwrap());
    assert!(lp.offer.is_some());
}

#[tokio::test]
async fn two_providers_see_different_subs() {
    let w = World::new();
    let jane = w.jane().await;
    let a = w.provider_with("op", None);
    let b = w.provider_with("other", None);
    let sa = login(&a, &jane, &authz(Flow::Implicit, "openid", "s", "n"), None).await;
    let sb = login(&b, &jane, &authz(Flow::Implicit, "openid", "s", "n"), None).await;
    let sub_a = a.session(&sa).unwrap().sub.unwrap();
    let sub_b = b.session(&sb).unwrap().sub.unwrap();
    assert_ne!(sub_a, sub_b);

    let sa2 = login(&a, &jane, &authz(Flow::Implicit, "openid", "s", "n"), None).await;
    assert_ne!(a.session(&sa2).unwrap().sub.unwrap(), sub_a, "a new connection means a new pairwise DID");
}

#[tokio::test]
async fn login_survives_wiping_provider_state() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let first = login(&p, &jane, &authz(Flow::Implicit, "openid email", "a", "n1"), None).await;
    let cookie = p.session_view(&first).unwrap().cookie.unwrap();
    let sub = p.session(&first).unwrap().sub.unwrap();

    p.wipe_volatile_state();
    assert_eq!(p.session_count(), 0);
    assert!(p.session(&first).is_none());

    let again = login(&p, &jane, &authz(Flow::Implicit, "openid email", "b", "n2"), Some(&cookie)).await;
    assert_eq!(p.session(&again).unwrap().status, SessionStatus::Proved);
    assert_eq!(p.session(&again).unwrap().sub.unwrap(), sub);

    p.wipe_volatile_state();
    let fresh = login(&p, &jane, &authz(Flow::Code, "openid email", "c", "n3"), None).await;
    assert_eq!(p.session(&fresh).unwrap().status, SessionStatus::Proved);
}

#[tokio::test]
async fn rejected_presentation_leaves_session_retryable() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid email", "s", "n"), None).await.unwrap());
    let conn = jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    let session = p.session(&lp.session_id).unwrap();
    let request: ProofRequest = session.proof_request.clone();

    let wallet = jane.wallet_snapshot();
    let stored = wallet.credentials.values().next().unwrap();
    let kp = wallet.keypair_for(&stored.credential.subject_did).unwrap();
    let mut pres = create_presentation(kp, &stored.credential, &request, &request.required().into_iter().map(str::to_owned).collect()).unwrap();
    pres.revealed.get_mut("email").unwrap().value = AttributeValue::from("mallory@example.org");
    let msg = AgentMessage::new(MessageType::ProofPresentation, "t", &ProofPresentationBody { presentation: pres });
    let reply = jane.send_message(&conn.my_did, &msg).await.unwrap().unwrap();
    assert_eq!(reply.msg_type, MessageType::ProblemReport);
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::PendingProof);

    let pending = jane.pending();
    jane.respond(&pending[0].id, Decision::approve()).await.unwrap();
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::Proved);
}

#[tokio::test]
async fn resend_issues_a_fresh_nonce() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid", "s", "n"), None).await.unwrap());
    jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    let before = p.session(&lp.session_id).unwrap().proof_request.nonce;
    p.resend_proof_request(&lp.session_id).await.unwrap();
    assert_ne!(p.session(&lp.session_id).unwrap().proof_request.nonce, before);
    let pending = jane.pending();
    assert_eq!(pending.len(), 2);
    // The stale request no longer maps to the session.
    let stale = pending.iter().find(|x| x.thread_id != p.session(&lp.session_id).unwrap().proof_thread.clone().unwrap()).unwrap();
    assert!(jane.respond(&stale.id, Decision::approve()).await.is_err());
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::PendingProof);
    let current = jane.pending();
    jane.respond(&current[0].id, Decision::approve()).await.unwrap();
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::Proved);
}

#[tokio::test]
async fn untrusted_issuer_is_refused() {
    let w = World::new();
    let p = w.provider_with("op", Some([Identity::generate().did].into()));
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid", "s", "n"), None).await.unwrap());
    jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    let pending = jane.pending();
    let err = jane.respond(&pending[0].id, Decision::approve()).await.unwrap_err();
    assert!(err.to_string().contains("trusted"), "{err}");
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::PendingProof);
}

#[tokio::test]
async fn expired_session_cannot_complete() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid", "s", "n"), None).await.unwrap());
    jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    w.clock.advance(SESSION_TTL_SECS);
    let pending = jane.pending();
    assert!(jane.respond(&pending[0].id, Decision::approve()).await.is_err());
    let view = p.session_view(&lp.session_id).unwrap();
    assert!(view.expired);
    assert_eq!(view.status, SessionStatus::PendingProof);
    assert!(view.redirect.is_none());
}

#[tokio::test]
async fn expired_offer_does_not_advance() {
    let w = World::new();
    let p = w.provider();
    let jane = w.jane().await;
    let lp = page(p.authorize(&authz(Flow::Implicit, "openid", "s", "n"), None).await.unwrap());
    w.clock.advance(SESSION_TTL_SECS + 1);
    jane.accept_connection_offer(lp.offer.as_ref().unwrap()).await.unwrap();
    assert_eq!(p.session(&lp.session_id).unwrap().status, SessionStatus::PendingConnection);
    assert!(jane.pending().is_empty());
}

fn token_with(key: &KeyPair, overrides: &[(&str, Value)]) -> String {
    let mut claims = Map::new();
    claims.insert("iss".into(), json!(ISSUER_URL));
    claims.insert("sub".into(), json!("did:desk:abc"));
    claims.insert("aud".into(), json!("wineshop"));
    claims.insert("iat".into(), json!(T2020));
    claims.insert("exp".into(), json!(T2020 + 300));
    claims.insert("nonce".into(), json!("n"));
    claims.insert("email".into(), json!("jane@example.org"));
    for (k, v) in overrides {
        claims.insert((*k).into(), v.clone());
    }
    sign_jwt(key, &claims)
}

#[test]
fn validation_errors_are_distinct() {
    let key = KeyPair::generate();
    let jwks = Jwks { keys: vec![Jwk::ed25519(&key.verkey())] };
    let ok = token_with(&key, &[]);
    let exp = expected("n");
    assert!(client_validate_id_token(&ok, &exp, &jwks, T2020).is_ok());

    assert_eq!(client_validate_id_token(&ok, &expected("other"), &jwks, T2020), Err(IdTokenError::NonceMismatch));
    let bad_iss = ExpectedToken { issuer: "https://x", ..exp.clone() };
    assert_eq!(client_validate_id_token(&ok, &bad_iss, &jwks, T2020), Err(IdTokenError::IssuerMismatch));
    let bad_aud = ExpectedToken { client_id: "other", ..exp.clone() };
    assert_eq!(client_validate_id_token(&ok, &bad_aud, &jwks, T2020), Err(IdTokenError::AudienceMismatch));
    assert_eq!(client_validate_id_token(&ok, &exp, &jwks, T2020 + 300), Err(IdTokenError::Expired));
    assert_eq!(
        client_validate_id_token(&ok, &exp, &Jwks::default(), T2020),
        Err(IdTokenError::UnknownKey(key_id(&key.verkey())))
    );

    let other = KeyPair::generate();
    let mut imposter = Jwk::ed25519(&other.verkey());
    imposter.kid = key_id(&key.verkey());
    let fake_set = Jwks { keys: vec![imposter] };
    assert_eq!(client_validate_id_token(&ok, &exp, &fake_set, T2020), Err(IdTokenError::BadSignature));

    let typed = token_with(&key, &[("email_verified", json!("yes"))]);
    assert_eq!(client_validate_id_token(&typed, &exp, &jwks, T2020), Err(IdTokenError::ClaimType("email_verified".into())));

    let parts: Vec<&str> = ok.split('.').collect();
    let hs = b64url_encode(br#"{"alg":"HS256","kid":"x"}"#);
    let none_alg = format!("{hs}.{}.{}", parts[1], parts[2]);
    assert_eq!(client_validate_id_token(&none_alg, &exp, &jwks, T2020), Err(IdTokenError::UnsupportedAlg("HS256".into())));
    assert!(matches!(client_validate_id_token("abc", &exp, &jwks, T2020), Err(IdTokenError::Malformed(_))));
}

#[test]
fn discovery_lists_endpoints() {
    let w = World::new();
    let p = w.provider();
    let d = p.discovery();
    assert_eq!(d["issuer"], ISSUER_URL);
    assert_eq!(d["jwks_uri"], "https://op.example/jwks");
    assert_eq!(d["token_endpoint"], "https://op.example/token");
    assert_eq!(d["authorization_endpoint"], "https://op.example/authorize");
    assert_eq!(d["userinfo_endpoint"], "https://op.example/userinfo");
    assert_eq!(d["response_types_supported"], json!(["id_token", "code"]));
    assert_eq!(p.jwks().keys.len(), 1);
}
