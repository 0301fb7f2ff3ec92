mod common;

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use didauth_core::agent::{
    AgentHook, AgentMessage, ConnectionOffer, ConnectionView, HttpTransport, MessageType, ProblemReport,
    ProofPresentationBody, RecordingTransport,
};
use didauth_core::credentials::{verify_presentation, NonceStore, ProofRequest, RequestedAttribute, VerifyOptions};
use reqwest::StatusCode;
use serde_json::{json, Value};

use common::{passport_values, Ledger};

#[derive(Default)]
struct Inbox {
    messages: Mutex<Vec<AgentMessage>>,
}

#[async_trait]
impl AgentHook for Inbox {
    async fn on_message(&self, _c: &ConnectionView, m: &AgentMessage) -> Option<AgentMessage> {
        self.messages.lock().unwrap().push(m.clone());
        None
    }
}

async fn post(url: &str, body: Option<Value>) -> reqwest::Response {
    let c = reqwest::Client::new().post(url);
    match body {
        Some(b) => c.json(&b).send().await.unwrap(),
        None => c.send().await.unwrap(),
    }
}

async fn get(url: &str) -> Value {
    reqwest::get(url).await.unwrap().json().await.unwrap()
}

/// Connects `holder` to `peer` through the HTTP API only.
async fn connect(peer_url: &str, holder_url: &str) -> (ConnectionOffer, ConnectionView) {
    let offer: ConnectionOffer = post(&format!("{peer_url}/connections/offer"), None).await.json().await.unwrap();
    let resp = reqwest::Client::new()
        .post(format!("{holder_url}/connections/accept"))
        .body(offer.to_json())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    (offer, resp.json().await.unwrap())
}

#[tokio::test]
async fn consent_flow_over_http() {
    let ledger = Ledger::new();
    let (issuer, issuer_url) = ledger.plain_agent("issuer").await;
    issuer.set_issuer(ledger.issuer.clone()).unwrap();
    let (_holder, holder_url) = ledger.plain_agent("jane").await;
    let recorder = RecordingTransport::new(Arc::new(HttpTransport::new()));
    let (verifier, verifier_url) = ledger.http_agent("shop", recorder.clone()).await;
    let inbox = Arc::new(Inbox::default());
    verifier.set_hook(inbox.clone());

    // Credential issuance, consented through the API.
    let (_, to_issuer) = connect(&issuer_url, &holder_url).await;
    issuer.offer_credential(&to_issuer.their_did, ledger.claim_def, passport_values()).await.unwrap();
    let pending = get(&format!("{holder_url}/pending")).await;
    assert_eq!(pending[0]["kind"], "credential_offer");
    assert_eq!(pending[0]["offer"]["attr_names"].as_array().unwrap().len(), 19);
    let id = pending[0]["id"].as_str().unwrap();
    let resp = post(&format!("{holder_url}/pending/{id}/approve"), None).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let creds = get(&format!("{holder_url}/credentials")).await;
    assert_eq!(creds.as_array().unwrap().len(), 1);
    assert_eq!(creds[0]["attributes"]["email"], "jane@example.org");
    assert!(!creds.to_string().contains("salt"));

    // Proof request with selective disclosure.
    let (_, to_shop) = connect(&verifier_url, &holder_url).await;
    let conns = get(&format!("{verifier_url}/connections")).await;
    assert_eq!(conns[0]["their_did"], json!(to_shop.my_did));
    let nonces = NonceStore::new();
    let request = ProofRequest::new("login", vec![RequestedAttribute::new("email")], vec!["over_18".into()]).unwrap();
    nonces.register(&request);
    verifier.send_proof_request(&to_shop.their_did, &request).await.unwrap();

    let pending = get(&format!("{holder_url}/pending")).await;
    assert_eq!(pending.as_array().unwrap().len(), 1);
    assert_eq!(pending[0]["kind"], "proof_request");
    assert_eq!(pending[0]["requested_attributes"][0]["name"], "email");
    assert_eq!(pending[0]["requested_predicates"], json!(["over_18"]));
    assert_eq!(pending[0]["matching_credentials"].as_array().unwrap().len(), 1);
    let id = pending[0]["id"].as_str().unwrap().to_owned();

    // Leaving out a requested attribute is refused and the request stays queued.
    let resp = post(&format!("{holder_url}/pending/{id}/approve"), Some(json!({"disclosed": ["over_18"]}))).await;
    assert!(resp.status().is_client_error(), "{}", resp.status());
    assert_eq!(get(&format!("{holder_url}/pending")).await.as_array().unwrap().len(), 1);

    let resp = post(&format!("{holder_url}/pending/{id}/approve"), Some(json!({"disclosed": ["email", "over_18"]}))).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let outcome: Value = resp.json().await.unwrap();
    assert_eq!(outcome["sent"], "PROOF_PRESENTATION");

    let got = inbox.messages.lock().unwrap().clone();
    assert_eq!(got.len(), 1);
    let body: ProofPresentationBody = got[0].body().unwrap();
    let verified =
        verify_presentation(&body.presentation, &request, verifier.registry(), &nonces, &VerifyOptions::default()).unwrap();
    assert_eq!(verified.names().into_iter().collect::<Vec<_>>(), vec!["email", "over_18"]);
    assert!(!body.presentation.to_json().contains("jane-name"));

    // Answered items are gone.
    let resp = post(&format!("{holder_url}/pending/{id}/approve"), None).await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);

    // Replaying the recorded proof request envelope is refused.
    let rec = recorder
        .records()
        .into_iter()
        .find(|r| r.endpoint == holder_url)
        .expect("proof request went to the holder");
    let resp = reqwest::Client::new()
        .post(format!("{holder_url}/inbox"))
        .body(rec.request.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);

    // Deny sends a PROBLEM_REPORT.
    let second = ProofRequest::new("again", vec![RequestedAttribute::new("email")], vec![]).unwrap();
    verifier.send_proof_request(&to_shop.their_did, &second).await.unwrap();
    let pending = get(&format!("{holder_url}/pending")).await;
    let id = pending[0]["id"].as_str().unwrap();
    let resp = post(&format!("{holder_url}/pending/{id}/deny"), None).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let last = inbox.messages.lock().unwrap().last().cloned().unwrap();
    assert_eq!(last.msg_type, MessageType::ProblemReport);
    assert_eq!(last.body::<ProblemReport>().unwrap().reason, "consent denied");
}

#[tokio::test]
async fn http_api_rejects_bad_input() {
    let ledger = Ledger::new();
    let (_a, url) = ledger.plain_agent("a").await;
    let c = reqwest::Client::new();

    let r = c.post(format!("{url}/connections/accept")).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = c.post(format!("{url}/inbox")).body("{}").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = c.post(format!("{url}/pending/nope/approve")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.post(format!("{url}/pending/nope/deny")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.post(format!("{url}/pending/nope/approve")).body("{\"bogus\":1}").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(get(&format!("{url}/pending")).await, json!([]));
    assert_eq!(get(&format!("{url}/credentials")).await, json!([]));
}

#[tokio::test]
async fn offer_is_single_use_over_http() {
    let ledger = Ledger::new();
    let (_a, a_url) = ledger.plain_agent("a").await;
    let (_b, b_url) = ledger.plain_agent("b").await;
    let (_c, c_url) = ledger.plain_agent("c").await;
    let (offer, _) = connect(&a_url, &b_url).await;
    let r = reqwest::Client::new()
        .post(format!("{c_url}/connections/accept"))
        .body(offer.to_json())
        .send()
        .await
        .unwrap();
    assert!(r.status().is_client_error() || r.status().is_server_error());
    let body: Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("offer"), "{body}");
}
