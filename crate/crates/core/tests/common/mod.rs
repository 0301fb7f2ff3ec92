#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use didauth_core::agent::{http as agent_http, Agent, AgentConfig, HttpTransport, Transport};
use didauth_core::credentials::{register_claim_def, register_schema, AttributeValue, OIDC_STANDARD_CLAIMS};
use didauth_core::registry::{GenesisFile, NymPayload, Role, TxnPayload};
use didauth_core::server::{bind_local, serve};
use didauth_core::{Identity, Registry, SystemClock};
use serde_json::json;

pub struct Ledger {
    pub registry: Arc<Registry>,
    pub issuer: Identity,
    pub claim_def: u64,
}

impl Ledger {
    pub fn new() -> Self {
        let trustee = Identity::from_seed([21u8; 32]);
        let registry = Arc::new(
            Registry::from_genesis(GenesisFile::create(&[(&trustee.keypair, None)], 1_600_000_000), SystemClock::shared())
                .unwrap(),
        );
        let issuer = Identity::generate();
        registry
            .submit(
                &trustee.did,
                &trustee.keypair,
                TxnPayload::Nym(NymPayload { dest: issuer.did.clone(), verkey: issuer.verkey(), alias: None, role: Role::Endorser }),
            )
            .unwrap();
        let attrs: Vec<&str> = OIDC_STANDARD_CLAIMS.iter().copied().filter(|c| *c != "sub").chain(["over_18"]).collect();
        let schema = register_schema(&registry, &issuer, "passport", "1.0", &attrs).unwrap();
        let claim_def = register_claim_def(&registry, &issuer, schema, "default").unwrap();
        Ledger { registry, issuer, claim_def }
    }

    /// An agent served over loopback HTTP with its own listener.
    pub async fn http_agent(&self, name: &str, transport: Arc<dyn Transport>) -> (Arc<Agent>, String) {
        let bound = bind_local().await.unwrap();
        let agent = Agent::new(AgentConfig::new(name, bound.url.clone()), self.registry.clone(), transport).unwrap();
        serve(bound.listener, agent_http::router(agent.clone()));
        (agent, bound.url)
    }

    pub async fn plain_agent(&self, name: &str) -> (Arc<Agent>, String) {
        self.http_agent(name, Arc::new(HttpTransport::new())).await
    }
}

pub fn passport_values() -> BTreeMap<String, AttributeValue> {
    let mut v = BTreeMap::new();
    for name in OIDC_STANDARD_CLAIMS.iter().filter(|c| **c != "sub") {
        let value = match *name {
            "email_verified" | "phone_number_verified" => AttributeValue::Bool(true),
            "updated_at" => AttributeValue::from(1_590_000_000i64),
            "address" => json!({"street_address": "1 Canal St", "country": "NL"}).as_object().unwrap().clone().into(),
            "birthdate" => AttributeValue::from("1990-01-01"),
            "email" => AttributeValue::from("jane@example.org"),
            other => AttributeValue::from(format!("jane-{other}")),
        };
        v.insert(name.to_string(), value);
    }
    v
}
