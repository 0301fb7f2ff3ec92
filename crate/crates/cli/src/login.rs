//! `scenario login`: a municipal office issues a passport credential to Jane
//! Doe, then Jane logs into a wine shop through the credential-backed OpenID
//! Connect provider.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use didauth_core::agent::{http as agent_http, Agent, AgentConfig, CredentialView, HttpCallbackHook, HttpTransport};
use didauth_core::credentials::{register_claim_def, register_schema, AttributeValue, OIDC_STANDARD_CLAIMS};
use didauth_core::oidc::{
    client_validate_id_token, http as oidc_http, ClientRegistration, ExpectedToken, Flow, LoginPage, Provider,
    ProviderConfig, RedirectResult, RelyingParty, SessionView, COOKIE_NAME, REGISTERED_CLAIMS,
};
use didauth_core::registry::{NymPayload, Role, TxnPayload};
use didauth_core::server::{bind_port, serve};
use didauth_core::{Identity, KeyPair};
use reqwest::header::{COOKIE, SET_COOKIE};
use serde_json::{json, Map, Value};

use crate::config::{ClientConfig, Ledger, Settings};
use crate::holder::HolderApi;
use crate::transcript::Transcript;
use crate::CliError;

pub const PASSPORT_SCHEMA: &str = "passport";
pub const PASSPORT_VERSION: &str = "1.0";
pub const LOGIN_SCOPE: &str = "openid email";
const WAIT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoginOptions {
    pub flow: Flow,
    pub deny: bool,
    pub hold: bool,
}

impl Default for LoginOptions {
    fn default() -> Self {
        LoginOptions { flow: Flow::Implicit, deny: false, hold: false }
    }
}

/// Jane Doe's passport attributes: every standard claim except `sub`.
/// `over_18` is added by the issuer from `birthdate`.
pub fn jane_doe_passport() -> BTreeMap<String, AttributeValue> {
    let mut address = Map::new();
    address.insert("street_address".into(), json!("12 Prinsengracht"));
    address.insert("locality".into(), json!("Amsterdam"));
    address.insert("postal_code".into(), json!("1015 DV"));
    address.insert("country".into(), json!("NL"));
    let values: [(&str, AttributeValue); 18] = [
        ("name", "Jane Doe".into()),
        ("given_name", "Jane".into()),
        ("family_name", "Doe".into()),
        ("middle_name", "Marie".into()),
        ("nickname", "JD".into()),
        ("profile", "https://people.example/jane".into()),
        ("picture", "https://people.example/jane.png".into()),
        ("website", "https://jane-doe.example".into()),
        ("email", "jane.doe@example.org".into()),
        ("email_verified", true.into()),
        ("gender", "female".into()),
        ("birthdate", "1990-04-12".into()),
        ("zoneinfo", "Europe/Amsterdam".into()),
        ("locale", "nl-NL".into()),
        ("phone_number", "+31 20 555 0199".into()),
        ("phone_number_verified", true.into()),
        ("address", address.into()),
        ("updated_at", 1_577_836_800i64.into()),
    ];
    values.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

pub fn passport_attributes() -> Vec<&'static str> {
    OIDC_STANDARD_CLAIMS.iter().copied().filter(|c| *c != "sub").chain(["over_18"]).collect()
}

pub struct ProviderHandle {
    pub provider: Arc<Provider>,
    pub url: String,
    pub agent: Arc<Agent>,
}

impl ProviderHandle {
    pub fn rp(&self, client: &ClientConfig) -> RelyingParty {
        RelyingParty::new(self.url.clone(), client.client_id.clone(), client.client_secret.clone(), client.redirect_uri.clone())
    }
}

/// A finished (accepted) login as seen by the relying party.
#[derive(Debug, Clone)]
pub struct LoginOutcome {
    pub flow: Flow,
    pub session_id: String,
    pub id_token: String,
    pub claims: Map<String, Value>,
    pub verified: BTreeMap<String, AttributeValue>,
    pub cookie: Option<String>,
    pub used_offer: bool,
}

impl LoginOutcome {
    pub fn sub(&self) -> &str {
        self.claims["sub"].as_str().unwrap_or_default()
    }

    /// Token claims that came from the presentation.
    pub fn credential_claims(&self) -> BTreeMap<String, Value> {
        self.claims
            .iter()
            .filter(|(k, _)| !REGISTERED_CLAIMS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Issuer, holder and provider services on loopback HTTP over one ledger.
pub struct Stack {
    pub settings: Settings,
    pub ledger: Ledger,
    pub issuer: Identity,
    pub claim_def: u64,
    pub issuer_agent: Arc<Agent>,
    pub holder_agent: Arc<Agent>,
    pub holder: HolderApi,
    pub providers: Vec<ProviderHandle>,
    pub credential: Option<CredentialView>,
    http: reqwest::Client,
    counter: u32,
}

async fn start_agent(stack_ledger: &Ledger, label: &str, port: u16, wallet: Option<&std::path::Path>) -> Result<(Arc<Agent>, String), String> {
    let bound = bind_port(port).await.map_err(|e| format!("{label}: bind {port}: {e}"))?;
    let mut config = AgentConfig::new(label, bound.url.clone());
    if let Some(w) = wallet {
        config = config.with_wallet(w);
    }
    let agent = Agent::new(config, stack_ledger.registry.clone(), Arc::new(HttpTransport::new())).map_err(|e| e.to_string())?;
    serve(bound.listener, agent_http::router(agent.clone()));
    Ok((agent, bound.url))
}

impl Stack {
    /// Ledger, issuer registration and the issuer and holder agents.
    pub async fn setup(settings: Settings, t: &mut Transcript) -> Result<Stack, CliError> {
        let ledger = settings.open_ledger().map_err(|e| t.fail_keep("ledger", e))?;
        t.ok("ledger", format!("height={} trustees={}", ledger.registry.height(), ledger.trustees.len()));

        let issuer = settings.seed.identity("municipal-office");
        let trustee = &ledger.trustees[0];
        let registered = match ledger.registry.resolve_nym(&issuer.did) {
            Ok(rec) if rec.role >= Role::Endorser => Ok(()),
            _ => ledger
                .registry
                .submit(
                    &trustee.did,
                    &trustee.keypair,
                    TxnPayload::Nym(NymPayload {
                        dest: issuer.did.clone(),
                        verkey: issuer.verkey(),
                        alias: Some("municipal-office".into()),
                        role: Role::Endorser,
                    }),
                )
                .map(|_| ()),
        };
        t.check("issuer-nym", registered, |_| format!("did={} role=ENDORSER", issuer.did))?;

        let schema = match ledger.registry.find_schema(PASSPORT_SCHEMA, PASSPORT_VERSION) {
            Some(s) => Ok(s),
            None => register_schema(&ledger.registry, &issuer, PASSPORT_SCHEMA, PASSPORT_VERSION, &passport_attributes()),
        };
        let schema = t.check("passport-schema", schema, |_| format!("attributes={}", passport_attributes().len()))?;
        let claim_def = match ledger.registry.find_claim_def(schema, &issuer.did, PASSPORT_SCHEMA) {
            Some(d) => Ok(d),
            None => register_claim_def(&ledger.registry, &issuer, schema, PASSPORT_SCHEMA),
        };
        let claim_def = t.check("claim-def", claim_def, |_| "tag=passport")?;

        let ports = settings.config.ports.clone();
        let (issuer_agent, _) = start_agent(&ledger, "municipal-office", ports.issuer_agent, None)
            .await
            .map_err(|e| t.fail("issuer-agent", e))?;
        t.check("issuer-agent", issuer_agent.set_issuer(issuer.clone()), |_| "")?;
        let (holder_agent, holder_url) = start_agent(&ledger, "jane-doe", ports.holder_agent, settings.config.wallet_path.as_deref())
            .await
            .map_err(|e| t.fail("holder-agent", e))?;
        t.ok("holder-agent", "");

        Ok(Stack {
            settings,
            ledger,
            issuer,
            claim_def,
            issuer_agent,
            holder_agent,
            holder: HolderApi::new(holder_url),
            providers: Vec::new(),
            credential: None,
            http: reqwest::Client::builder()
                .redirect(reqwest::redirect::Policy::none())
                .timeout(Duration::from_secs(10))
                .build()
                .expect("reqwest client"),
            counter: 0,
        })
    }

    /// Connection, credential offer, holder consent and storage.
    pub async fn issue_passport(&mut self, t: &mut Transcript) -> Result<CredentialView, CliError> {
        self.issue_values(t, jane_doe_passport()).await
    }

    pub async fn issue_values(
        &mut self,
        t: &mut Transcript,
        values: BTreeMap<String, AttributeValue>,
    ) -> Result<CredentialView, CliError> {
        let offer = self.issuer_agent.create_connection_offer();
        let conn = self.holder.accept(&offer).await.map_err(|e| t.fail("issuer-connection", e))?;
        t.ok("issuer-connection", format!("state={}", json!(conn.state).as_str().unwrap_or_default()));

        let before = self.holder.credentials().await.map_err(|e| t.fail("credential-offer", e))?;
        // The holder's their_did is the issuer's pairwise DID.
        let issuer_side = self
            .issuer_agent
            .connections()
            .into_iter()
            .find(|c| c.their_did == conn.my_did)
            .ok_or_else(|| t.fail("credential-offer", "issuer has no matching connection"))?;
        let sent = self.issuer_agent.offer_credential(&issuer_side.my_did, self.claim_def, values).await;
        t.check("credential-offer", sent, |_| format!("schema={PASSPORT_SCHEMA}"))?;

        let pending = self.holder.wait_pending("credential_offer", WAIT).await.map_err(|e| t.fail("credential-consent", e))?;
        let attrs = pending.offer.as_ref().map(|o| o.attr_names.len()).unwrap_or(0);
        let outcome = self.holder.approve(&pending.id, None).await;
        t.check("credential-consent", outcome, |_| format!("approve attributes={attrs}"))?;

        let after = self.holder.credentials().await.map_err(|e| t.fail("credential-stored", e))?;
        let fresh = after
            .into_iter()
            .find(|c| c.issuer_did == self.issuer.did && !before.iter().any(|b| b.id == c.id))
            .ok_or_else(|| t.fail("credential-stored", "no new credential in the wallet"))?;
        let over_18 = fresh.attributes.get("over_18").map(|v| v.to_json()).unwrap_or(Value::Null);
        t.ok("credential-stored", format!("attributes={} over_18={over_18}", fresh.attributes.len()));
        self.credential = Some(fresh.clone());
        Ok(fresh)
    }

    /// Starts an OpenID provider with its own agent. `port` 0 picks one.
    pub async fn start_provider(&mut self, name: &str, port: u16, agent_port: u16) -> Result<usize, String> {
        let (agent, _) = start_agent(&self.ledger, &format!("{name}-agent"), agent_port, None).await?;
        let bound = bind_port(port).await.map_err(|e| format!("{name}: bind {port}: {e}"))?;
        let client = &self.settings.config.client;
        let mut trusted: std::collections::BTreeSet<_> = self.settings.config.trusted_issuers.iter().cloned().collect();
        trusted.insert(self.issuer.did.clone());
        let config = ProviderConfig {
            issuer: bound.url.clone(),
            clients: vec![ClientRegistration {
                client_id: client.client_id.clone(),
                client_secret: client.client_secret.clone(),
                redirect_uris: vec![client.redirect_uri.clone()],
                allowed_flows: [Flow::Implicit, Flow::Code].into(),
                requested_predicates: client.predicates.clone(),
            }],
            trusted_issuers: Some(trusted),
        };
        let key = KeyPair::from_seed(self.settings.seed.derive(&format!("{name}-signing-key")));
        let provider = Provider::new(config, key, agent.clone());
        // Presentations reach the provider through its HTTP callback.
        agent.set_hook(Arc::new(HttpCallbackHook::new(format!("{}/proof-callback", bound.url))));
        serve(bound.listener, oidc_http::router(provider.clone()));
        self.providers.push(ProviderHandle { provider, url: bound.url, agent });
        Ok(self.providers.len() - 1)
    }

    fn next_token(&mut self, kind: &str) -> String {
        self.counter += 1;
        hex::encode(&self.settings.seed.derive(&format!("{kind}-{}", self.counter))[..12])
    }

    /// One login at provider `idx`. With a cookie from an earlier login the
    /// provider reuses the pairwise connection and no offer is scanned.
    pub async fn login(
        &mut self,
        t: &mut Transcript,
        idx: usize,
        flow: Flow,
        deny: bool,
        cookie: Option<&str>,
    ) -> Result<LoginOutcome, CliError> {
        let state = self.next_token("state");
        let nonce = self.next_token("nonce");
        let client = self.settings.config.client.clone();
        let handle = &self.providers[idx];
        let rp = handle.rp(&client);
        let url = rp.authorize_url(flow, LOGIN_SCOPE, &state, &nonce);

        let mut req = self.http.get(&url);
        if let Some(c) = cookie {
            req = req.header(COOKIE, format!("{COOKIE_NAME}={c}"));
        }
        let resp = req.send().await.map_err(|e| t.fail("authorize", e))?;
        if !resp.status().is_success() {
            return Err(t.fail("authorize", format!("HTTP {}", resp.status())));
        }
        let page: LoginPage = resp.json().await.map_err(|e| t.fail("authorize", e))?;
        t.ok("authorize", format!("flow={flow} scope=\"{LOGIN_SCOPE}\""));

        let used_offer = page.offer.is_some();
        match &page.offer {
            Some(offer) => {
                let conn = self.holder.accept(offer).await.map_err(|e| t.fail("connection", e))?;
                t.ok("connection", format!("state={}", json!(conn.state).as_str().unwrap_or_default()));
            }
            None => t.ok("connection", "reused"),
        }

        let pending = self.holder.wait_pending("proof_request", WAIT).await.map_err(|e| t.fail("proof-request", e))?;
        let mut requested: Vec<String> = pending.requested_attributes.iter().map(|a| a.name.clone()).collect();
        requested.extend(pending.requested_predicates.iter().cloned());
        t.ok("proof-request", format!("attributes={}", requested.join(",")));

        if deny {
            let r = self.holder.deny(&pending.id).await;
            t.check("consent", r, |_| "deny")?;
        } else {
            let r = self.holder.approve(&pending.id, Some(&requested)).await;
            t.check("consent", r, |_| format!("approve disclosed={}", requested.join(",")))?;
        }

        let (location, new_cookie) =
            self.wait_redirect(&handle.url.clone(), &page.session_id).await.map_err(|e| t.fail("redirect", e))?;
        let parsed = RelyingParty::parse_redirect(&location).map_err(|e| t.fail("redirect", e))?;
        let raw = match parsed {
            RedirectResult::Error { error, .. } => {
                t.ok("redirect", format!("error={error}"));
                if error == "access_denied" {
                    t.line("STEP login FAIL access_denied");
                    return Err(CliError::AccessDenied);
                }
                return Err(t.fail("login", error));
            }
            RedirectResult::IdToken { id_token, state: got } => {
                if got.as_deref() != Some(state.as_str()) {
                    return Err(t.fail("redirect", "state mismatch"));
                }
                t.ok("redirect", "response=id_token");
                id_token
            }
            RedirectResult::Code { code, state: got } => {
                if got.as_deref() != Some(state.as_str()) {
                    return Err(t.fail("redirect", "state mismatch"));
                }
                t.ok("redirect", "response=code");
                let token = rp.exchange_code(&code).await.map_err(|e| t.fail("token-exchange", e))?;
                t.ok("token-exchange", format!("token_type={}", token.token_type));
                token.id_token
            }
        };

        let jwks = rp.fetch_jwks().await.map_err(|e| t.fail("id-token", e))?;
        let expected = ExpectedToken { issuer: &rp.issuer, client_id: &rp.client_id, nonce: Some(&nonce) };
        let now = self.ledger.registry.clock().now();
        let claims = client_validate_id_token(&raw, &expected, &jwks, now).map_err(|e| t.fail("id-token", e))?;
        t.ok("id-token", "alg=EdDSA");

        let info = rp.userinfo(&raw).await.map_err(|e| t.fail("userinfo", e))?;
        if info.get("sub") != claims.get("sub") {
            return Err(t.fail("userinfo", "sub differs from the ID token"));
        }
        t.ok("userinfo", "");

        let verified = self.providers[idx]
            .provider
            .verified_claims(&page.session_id)
            .ok_or_else(|| t.fail("claims-match", "provider kept no verified claims"))?;
        let outcome = LoginOutcome {
            flow,
            session_id: page.session_id,
            id_token: raw,
            claims,
            verified,
            cookie: new_cookie,
            used_offer,
        };
        self.check_claims(t, &outcome)?;
        Ok(outcome)
    }

    async fn wait_redirect(&self, provider_url: &str, session_id: &str) -> Result<(String, Option<String>), String> {
        let deadline = tokio::time::Instant::now() + WAIT;
        loop {
            let resp = self
                .http
                .get(format!("{provider_url}/session/{session_id}"))
                .send()
                .await
                .map_err(|e| e.to_string())?;
            let cookie = resp
                .headers()
                .get(SET_COOKIE)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.split(';').next())
                .and_then(|v| v.strip_prefix(&format!("{COOKIE_NAME}=")))
                .map(str::to_owned);
            let view: SessionView = resp.json().await.map_err(|e| e.to_string())?;
            if let Some(r) = view.redirect {
                return Ok((r, cookie));
            }
            if view.expired || tokio::time::Instant::now() >= deadline {
                return Err(format!("session {} still {:?}", view.session_id, view.status));
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    fn check_claims(&self, t: &mut Transcript, outcome: &LoginOutcome) -> Result<(), CliError> {
        let token: BTreeMap<String, Value> = outcome.credential_claims();
        let verified: BTreeMap<String, Value> = outcome.verified.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        for (k, v) in &token {
            t.line(format!("CLAIM {k}={v}"));
        }
        if token != verified {
            return Err(t.fail("claims-match", "ID token claims differ from the verified presentation"));
        }
        for required in ["email", "over_18"] {
            if !token.contains_key(required) {
                return Err(t.fail("claims-match", format!("{required} missing from the ID token")));
            }
        }
        t.ok("claims-match", format!("claims={}", token.len()));

        if let Some(cred) = &self.credential {
            for (k, v) in &token {
                if cred.attributes.get(k).map(AttributeValue::to_json).as_ref() != Some(v) {
                    return Err(t.fail("credential-match", format!("{k} differs from the issued credential")));
                }
            }
            t.ok("credential-match", "");
        }
        Ok(())
    }
}

/// What `scenario login` returns to the binary and to tests.
pub struct LoginReport {
    pub outcome: LoginOutcome,
    pub credential: CredentialView,
    pub elapsed: Duration,
}

pub async fn run(settings: Settings, opts: LoginOptions, t: &mut Transcript) -> Result<Option<LoginReport>, CliError> {
    let started = Instant::now();
    let ports = settings.config.ports.clone();
    let mut stack = Stack::setup(settings, t).await?;
    let idx = stack
        .start_provider("wineshop-op", ports.provider, ports.provider_agent)
        .await
        .map_err(|e| t.fail("provider", e))?;
    t.ok("provider", format!("client={}", stack.settings.config.client.client_id));
    let credential = stack.issue_passport(t).await?;

    if opts.hold {
        let p = &stack.providers[idx];
        let rp = p.rp(&stack.settings.config.client);
        eprintln!("holder agent API: {}", stack.holder.base());
        eprintln!("provider:         {}", p.url);
        eprintln!("login URL:        {}", rp.authorize_url(opts.flow, LOGIN_SCOPE, "hold", "hold-nonce"));
        eprintln!("services are running; press Ctrl-C to stop");
        t.ok("hold", "");
        let _ = tokio::signal::ctrl_c().await;
        return Ok(None);
    }

    let outcome = stack.login(t, idx, opts.flow, opts.deny, None).await?;
    t.ok("login", format!("flow={}", opts.flow));
    Ok(Some(LoginReport { outcome, credential, elapsed: started.elapsed() }))
}
