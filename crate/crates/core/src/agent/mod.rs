//! Edge agents: pairwise connections, authcrypted messaging, a persistent
//! wallet and a consent queue for proof requests and credential offers.

mod hook;
pub mod http;
mod message;
mod transport;
mod wallet;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hook::{AgentHook, HookEvent, HttpCallbackHook};
pub use message::{
    AgentMessage, ConnectionRequest, ConnectionResponse, CredentialIssue, CredentialOffer, CredentialRequest,
    MessageType, ProblemReport, ProofPresentationBody, ProofRequestBody,
};
pub use transport::{inbox_url, HttpTransport, LocalTransport, RecordingTransport, Transport, TransportError, WireRecord};
pub use wallet::{
    ConnectionState, OfferRecord, PairwiseConnection, PendingKind, PendingRequest, StoredCredential, Wallet, WalletError,
};

use crate::credentials::{
    self, create_presentation, AttributeValue, Credential, CredentialError, ProofRequest, RequestedAttribute,
};
use crate::identity::{auth_decrypt, auth_encrypt, AuthcryptEnvelope, Did, Identity, IdentityError, Verkey};
use crate::registry::Registry;

/// Reason carried by the PROBLEM_REPORT sent when the holder declines.
pub const CONSENT_DENIED: &str = "consent denied";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("offer consumed")]
    OfferConsumed,
    #[error("unknown offer")]
    UnknownOffer,
    #[error("invalid offer: {0}")]
    InvalidOffer(String),
    #[error("no connection or offer for recipient key {0}")]
    UnknownRecipient(Verkey),
    #[error("sender key {0} does not belong to the connection")]
    UnknownSender(Verkey),
    #[error("unknown connection {0}")]
    UnknownConnection(Did),
    #[error("connection {0} is not established")]
    NotEstablished(Did),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("unexpected {0:?} message")]
    UnexpectedMessage(MessageType),
    #[error("unknown pending request {0}")]
    UnknownPending(String),
    #[error("no matching credential in wallet")]
    NoMatchingCredential,
    #[error("proof request already answered")]
    RequestReplayed,
    #[error("agent has no issuer identity")]
    NotAnIssuer,
    #[error("no credential offer for thread {0}")]
    UnknownThread(String),
    #[error("peer reported a problem: {0}")]
    PeerProblem(String),
}

impl AgentError {
    /// HTTP status used when the error crosses the agent API.
    pub fn status(&self) -> u16 {
        match self {
            AgentError::OfferConsumed | AgentError::RequestReplayed => 409,
            AgentError::UnknownOffer | AgentError::UnknownPending(_) | AgentError::UnknownConnection(_) => 404,
            AgentError::UnknownRecipient(_) | AgentError::UnknownSender(_) => 403,
            AgentError::Identity(
                IdentityError::Authentication | IdentityError::SenderSignature | IdentityError::WrongRecipient,
            ) => 403,
            AgentError::NoMatchingCredential | AgentError::Credential(_) => 422,
            AgentError::Transport(_) | AgentError::PeerProblem(_) => 502,
            AgentError::Wallet(_) => 500,
            _ => 400,
        }
    }
}

/// The QR payload a peer scans to connect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionOffer {
    pub offer_id: String,
    pub endpoint: String,
    pub sender_did: Did,
    pub sender_verkey: Verkey,
    pub label: String,
}

impl ConnectionOffer {
    pub fn to_json(&self) -> String {
        crate::codec::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, AgentError> {
        serde_json::from_str(s).map_err(|e| AgentError::InvalidOffer(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionView {
    pub my_did: Did,
    pub my_verkey: Verkey,
    pub their_did: Did,
    pub their_verkey: Verkey,
    pub their_endpoint: String,
    pub state: ConnectionState,
    pub label: String,
}

impl From<&PairwiseConnection> for ConnectionView {
    fn from(c: &PairwiseConnection) -> Self {
        ConnectionView {
            my_did: c.my_did.clone(),
            my_verkey: c.my_keypair.verkey(),
            their_did: c.their_did.clone(),
            their_verkey: c.their_verkey,
            their_endpoint: c.their_endpoint.clone(),
            state: c.state,
            label: c.label.clone(),
        }
    }
}

/// Credential attributes without salts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialView {
    pub id: String,
    pub issuer_did: Did,
    pub subject_did: Did,
    pub schema_seq_no: u64,
    pub claim_def_seq_no: u64,
    pub issued_at: i64,
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl From<&StoredCredential> for CredentialView {
    fn from(s: &StoredCredential) -> Self {
        let c = &s.credential;
        CredentialView {
            id: s.id.clone(),
            issuer_did: c.issuer_did.clone(),
            subject_did: c.subject_did.clone(),
            schema_seq_no: c.schema_seq_no,
            claim_def_seq_no: c.claim_def_seq_no,
            issued_at: c.issued_at,
            attributes: c.attributes.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingView {
    pub id: String,
    pub kind: String,
    pub connection: Did,
    pub label: String,
    pub thread_id: String,
    pub received_at: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requested_attributes: Vec<RequestedAttribute>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requested_predicates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer: Option<CredentialOffer>,
    pub matching_credentials: Vec<String>,
}

/// Holder's answer to a pending request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Approve {
        #[serde(default)]
        disclosed: Option<BTreeSet<String>>,
        #[serde(default)]
        credential_id: Option<String>,
    },
    Deny,
}

impl Decision {
    pub fn approve() -> Self {
        Decision::Approve { disclosed: None, credential_id: None }
    }

    pub fn approve_disclosing<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        Decision::Approve { disclosed: Some(names.into_iter().map(Into::into).collect()), credential_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentOutcome {
    pub pending_id: String,
    pub sent: MessageType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<AgentMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentRecord {
    pub msg_type: MessageType,
    pub thread_id: String,
    pub to: Did,
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub label: String,
    pub endpoint: String,
    pub wallet_path: Option<PathBuf>,
}

impl AgentConfig {
    pub fn new(label: impl Into<String>, endpoint: impl Into<String>) -> Self {
        AgentConfig { label: label.into(), endpoint: endpoint.into(), wallet_path: None }
    }

    pub fn with_wallet(mut self, path: impl Into<PathBuf>) -> Self {
        self.wallet_path = Some(path.into());
        self
    }
}

struct IssuancePlan {
    connection: Did,
    claim_def_seq_no: u64,
    values: BTreeMap<String, AttributeValue>,
}

#[derive(Default)]
struct IssuerState {
    identity: Option<Identity>,
    plans: HashMap<String, IssuancePlan>,
}

pub struct Agent {
    label: String,
    endpoint: String,
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    wallet: Mutex<Wallet>,
    wallet_path: Option<PathBuf>,
    hook: RwLock<Option<Arc<dyn AgentHook>>>,
    issuer: Mutex<IssuerState>,
    sent: Mutex<Vec<SentRecord>>,
}

fn random_id() -> String {
    let mut b = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut b);
    hex::encode(b)
}

fn credential_matches(c: &Credential, request: &ProofRequest) -> bool {
    request.required().iter().all(|n| c.attributes.contains_key(*n))
        && request.check_restrictions(&c.issuer_did, c.schema_seq_no).is_ok()
        && request
            .requested_predicates
            .iter()
            .all(|p| c.value(p).and_then(AttributeValue::as_bool) == Some(true))
}

impl Agent {
    pub fn new(config: AgentConfig, registry: Arc<Registry>, transport: Arc<dyn Transport>) -> Result<Arc<Self>, AgentError> {
        let wallet = match &config.wallet_path {
            Some(p) => Wallet::load(p)?,
            None => Wallet::default(),
        };
        Ok(Arc::new(Agent {
            label: config.label,
            endpoint: config.endpoint,
            registry,
            transport,
            wallet: Mutex::new(wallet),
            wallet_path: config.wallet_path,
            hook: RwLock::new(None),
            issuer: Mutex::new(IssuerState::default()),
            sent: Mutex::new(Vec::new()),
        }))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn set_hook(&self, hook: Arc<dyn AgentHook>) {
        *self.hook.write().expect("hook lock") = Some(hook);
    }

    fn hook(&self) -> Option<Arc<dyn AgentHook>> {
        self.hook.read().expect("hook lock").clone()
    }

    /// Lets this agent answer CREDENTIAL_REQUESTs as `identity`.
    pub fn set_issuer(&self, identity: Identity) -> Result<(), AgentError> {
        self.wallet().keypairs.insert(identity.did.clone(), identity.keypair.clone());
        self.issuer.lock().expect("issuer lock").identity = Some(identity);
        self.persist()
    }

    fn wallet(&self) -> MutexGuard<'_, Wallet> {
        self.wallet.lock().expect("wallet lock")
    }

    fn persist(&self) -> Result<(), AgentError> {
        if let Some(path) = &self.wallet_path {
            let snapshot = self.wallet().clone();
            snapshot.save(path)?;
        }
        Ok(())
    }

    pub fn save(&self) -> Result<(), AgentError> {
        self.persist()
    }

    /// Full wallet contents, including keys. Never served over HTTP.
    pub fn wallet_snapshot(&self) -> Wallet {
        self.wallet().clone()
    }

    /// Every message this agent has put on the wire, in order.
    pub fn sent_messages(&self) -> Vec<SentRecord> {
        self.sent.lock().expect("sent log").clone()
    }

    pub fn connections(&self) -> Vec<ConnectionView> {
        self.wallet().connections.values().map(ConnectionView::from).collect()
    }

    pub fn connection(&self, my_did: &Did) -> Option<ConnectionView> {
        self.wallet().connections.get(my_did).map(ConnectionView::from)
    }

    pub fn credentials(&self) -> Vec<CredentialView> {
        self.wallet().credentials.values().map(CredentialView::from).collect()
    }

    pub fn credential(&self, id: &str) -> Option<Credential> {
        self.wallet().credentials.get(id).map(|s| s.credential.clone())
    }

    pub fn pending(&self) -> Vec<PendingView> {
        let w = self.wallet();
        let mut out: Vec<PendingView> = w
            .pending_requests
            .values()
            .map(|p| {
                let label = w.connections.get(&p.connection).map(|c| c.label.clone()).unwrap_or_default();
                let mut view = PendingView {
                    id: p.id.clone(),
                    kind: String::new(),
                    connection: p.connection.clone(),
                    label,
                    thread_id: p.thread_id.clone(),
                    received_at: p.received_at,
                    requested_attributes: Vec::new(),
                    requested_predicates: Vec::new(),
                    offer: None,
                    matching_credentials: Vec::new(),
                };
                match &p.kind {
                    PendingKind::ProofRequest { request } => {
                        view.kind = "proof_request".into();
                        view.requested_attributes = request.requested_attributes.clone();
                        view.requested_predicates = request.requested_predicates.clone();
                        view.matching_credentials = w
                            .credentials
                            .values()
                            .filter(|s| credential_matches(&s.credential, request))
                            .map(|s| s.id.clone())
                            .collect();
                    }
                    PendingKind::CredentialOffer { offer } => {
                        view.kind = "credential_offer".into();
                        view.offer = Some(offer.clone());
                    }
                }
                view
            })
            .collect();
        out.sort_by(|a, b| (a.received_at, &a.id).cmp(&(b.received_at, &b.id)));
        out
    }

    pub fn create_connection_offer(&self) -> ConnectionOffer {
        let me = Identity::generate();
        let offer = ConnectionOffer {
            offer_id: random_id(),
            endpoint: self.endpoint.clone(),
            sender_did: me.did.clone(),
            sender_verkey: me.verkey(),
            label: self.label.clone(),
        };
        self.wallet()
            .open_offers
            .insert(offer.offer_id.clone(), OfferRecord { did: me.did, keypair: me.keypair });
        if let Err(e) = self.persist() {
            tracing::warn!("wallet save failed: {e}");
        }
        offer
    }

    fn seal(conn: &PairwiseConnection, msg: &AgentMessage) -> Result<AuthcryptEnvelope, AgentError> {
        Ok(auth_encrypt(&conn.my_keypair, &conn.their_verkey, &msg.to_bytes())?)
    }

    fn open_from_peer(conn: &PairwiseConnection, env: &AuthcryptEnvelope) -> Result<AgentMessage, AgentError> {
        let (plain, sender) = auth_decrypt(&conn.my_keypair, env)?;
        if sender != conn.their_verkey {
            return Err(AgentError::UnknownSender(sender));
        }
        AgentMessage::from_bytes(&plain)
    }

    fn record_sent(&self, msg: &AgentMessage, to: &Did) {
        self.sent.lock().expect("sent log").push(SentRecord {
            msg_type: msg.msg_type,
            thread_id: msg.thread_id.clone(),
            to: to.clone(),
        });
    }

    async fn transmit(&self, conn: &PairwiseConnection, msg: &AgentMessage) -> Result<Option<AgentMessage>, AgentError> {
        let env = Self::seal(conn, msg)?;
        let reply = self.transport.deliver(&conn.their_endpoint, &env).await?;
        self.record_sent(msg, &conn.their_did);
        reply.map(|r| Self::open_from_peer(conn, &r)).transpose()
    }

    fn established(&self, my_did: &Did) -> Result<PairwiseConnection, AgentError> {
        let conn = self
            .wallet()
            .connections
            .get(my_did)
            .cloned()
            .ok_or_else(|| AgentError::UnknownConnection(my_did.clone()))?;
        if conn.state != ConnectionState::Established {
            return Err(AgentError::NotEstablished(my_did.clone()));
        }
        Ok(conn)
    }

    /// Sends `msg` on the connection identified by our side's DID and returns
    /// the peer's inline reply, if any.
    pub async fn send_message(&self, my_did: &Did, msg: &AgentMessage) -> Result<Option<AgentMessage>, AgentError> {
        let conn = self.established(my_did)?;
        self.transmit(&conn, msg).await
    }

    pub async fn accept_connection_offer(&self, offer: &ConnectionOffer) -> Result<ConnectionView, AgentError> {
        if !offer.sender_did.is_derived_from(&offer.sender_verkey) {
            return Err(AgentError::InvalidOffer("sender DID does not match its verkey".into()));
        }
        let me = Identity::generate();
        let conn = PairwiseConnection {
            my_did: me.did.clone(),
            my_keypair: me.keypair.clone(),
            their_did: offer.sender_did.clone(),
            their_verkey: offer.sender_verkey,
            their_endpoint: offer.endpoint.clone(),
            state: ConnectionState::Offered,
            label: offer.label.clone(),
        };
        {
            let mut w = self.wallet();
            if !w.used_offers.insert(offer.offer_id.clone()) {
                return Err(AgentError::OfferConsumed);
            }
            w.connections.insert(me.did.clone(), conn.clone());
        }
        self.persist()?;

        let request = AgentMessage::new(
            MessageType::ConnectionRequest,
            offer.offer_id.clone(),
            &ConnectionRequest {
                offer_id: offer.offer_id.clone(),
                did: me.did.clone(),
                verkey: me.verkey(),
                endpoint: self.endpoint.clone(),
                label: self.label.clone(),
            },
        );
        let outcome = self.transmit(&conn, &request).await;
        let reply = match outcome {
            Ok(Some(reply)) => reply,
            Ok(None) => {
                self.abandon_connection(&me.did, &offer.offer_id, false);
                return Err(AgentError::MalformedMessage("no connection response".into()));
            }
            Err(AgentError::Transport(TransportError::Rejected { status: 409, .. })) => {
                self.abandon_connection(&me.did, &offer.offer_id, true);
                return Err(AgentError::OfferConsumed);
            }
            Err(e) => {
                let retryable = matches!(&e, AgentError::Transport(t) if t.is_retryable());
                self.abandon_connection(&me.did, &offer.offer_id, !retryable);
                return Err(e);
            }
        };
        if reply.msg_type != MessageType::ConnectionResponse {
            self.abandon_connection(&me.did, &offer.offer_id, true);
            return Err(AgentError::UnexpectedMessage(reply.msg_type));
        }
        let body: ConnectionResponse = reply.body()?;
        if body.offer_id != offer.offer_id || body.did != offer.sender_did {
            self.abandon_connection(&me.did, &offer.offer_id, true);
            return Err(AgentError::MalformedMessage("connection response does not match the offer".into()));
        }
        let view = {
            let mut w = self.wallet();
            let c = w.connections.get_mut(&me.did).expect("connection stored above");
            c.state = ConnectionState::Established;
            ConnectionView::from(&*c)
        };
        self.persist()?;
        Ok(view)
    }

    fn abandon_connection(&self, my_did: &Did, offer_id: &str, keep_offer_used: bool) {
        {
            let mut w = self.wallet();
            w.connections.remove(my_did);
            if !keep_offer_used {
                w.used_offers.remove(offer_id);
            }
        }
        if let Err(e) = self.persist() {
            tracing::warn!("wallet save failed: {e}");
        }
    }

    /// Authenticates and routes one inbound envelope. The returned envelope,
    /// if any, is the inline reply for the sender.
    pub async fn receive_envelope(&self, env: &AuthcryptEnvelope) -> Result<Option<AuthcryptEnvelope>, AgentError> {
        enum Route {
            Offer(String, OfferRecord),
            Connection(PairwiseConnection),
        }
        let route = {
            let w = self.wallet();
            if let Some(c) = w.connection_by_my_verkey(&env.recipient_verkey) {
                Route::Connection(c.clone())
            } else if let Some((id, rec)) = w.offer_by_verkey(&env.recipient_verkey) {
                Route::Offer(id.clone(), rec.clone())
            } else {
                return Err(AgentError::UnknownRecipient(env.recipient_verkey));
            }
        };
        match route {
            Route::Offer(offer_id, rec) => self.handle_connection_request(offer_id, rec, env).await,
            Route::Connection(conn) => {
                let (plain, sender) = auth_decrypt(&conn.my_keypair, env)?;
                let msg = AgentMessage::from_bytes(&plain)?;
                if msg.msg_type == MessageType::ConnectionRequest {
                    let body: ConnectionRequest = msg.body()?;
                    let used = self.wallet().used_offers.contains(&body.offer_id);
                    return Err(if used { AgentError::OfferConsumed } else { AgentError::UnknownOffer });
                }
                if sender != conn.their_verkey {
                    return Err(AgentError::UnknownSender(sender));
                }
                self.dispatch(conn, msg).await
            }
        }
    }

    async fn handle_connection_request(
        &self,
        offer_id: String,
        rec: OfferRecord,
        env: &AuthcryptEnvelope,
    ) -> Result<Option<AuthcryptEnvelope>, AgentError> {
        let (plain, sender) = auth_decrypt(&rec.keypair, env)?;
        let msg = AgentMessage::from_bytes(&plain)?;
        if msg.msg_type != MessageType::ConnectionRequest {
            return Err(AgentError::UnexpectedMessage(msg.msg_type));
        }
        let body: ConnectionRequest = msg.body()?;
        if body.offer_id != offer_id {
            return Err(AgentError::UnknownOffer);
        }
        if body.verkey != sender || !body.did.is_derived_from(&sender) {
            return Err(AgentError::MalformedMessage("connection request key does not match its sender".into()));
        }
        let conn = PairwiseConnection {
            my_did: rec.did,
            my_keypair: rec.keypair,
            their_did: body.did,
            their_verkey: sender,
            their_endpoint: body.endpoint,
            state: ConnectionState::Established,
            label: body.label,
        };
        {
            let mut w = self.wallet();
            if w.open_offers.remove(&offer_id).is_none() {
                return Err(AgentError::OfferConsumed);
            }
            w.used_offers.insert(offer_id.clone());
            w.connections.insert(conn.my_did.clone(), conn.clone());
        }
        self.persist()?;

        let reply = AgentMessage::new(
            MessageType::ConnectionResponse,
            msg.thread_id,
            &ConnectionResponse { offer_id: offer_id.clone(), did: conn.my_did.clone() },
        );
        let sealed = Self::seal(&conn, &reply)?;
        self.record_sent(&reply, &conn.their_did);
        if let Some(hook) = self.hook() {
            hook.on_connection(&offer_id, &ConnectionView::from(&conn)).await;
        }
        Ok(Some(sealed))
    }

    async fn dispatch(&self, conn: PairwiseConnection, msg: AgentMessage) -> Result<Option<AuthcryptEnvelope>, AgentError> {
        let now = self.registry.clock().now();
        match msg.msg_type {
            MessageType::ProofRequest => {
                let body: ProofRequestBody = msg.body()?;
                body.request.validate()?;
                {
                    let mut w = self.wallet();
                    if w.consumed_nonces.contains(&body.request.nonce_hex()) {
                        return Err(AgentError::RequestReplayed);
                    }
                    let id = random_id();
                    w.pending_requests.insert(
                        id.clone(),
                        PendingRequest {
                            id,
                            connection: conn.my_did.clone(),
                            thread_id: msg.thread_id.clone(),
                            received_at: now,
                            kind: PendingKind::ProofRequest { request: body.request },
                        },
                    );
                }
                self.persist()?;
                Ok(None)
            }
            MessageType::CredentialOffer => {
                let offer: CredentialOffer = msg.body()?;
                {
                    let id = random_id();
                    self.wallet().pending_requests.insert(
                        id.clone(),
                        PendingRequest {
                            id,
                            connection: conn.my_did.clone(),
                            thread_id: msg.thread_id.clone(),
                            received_at: now,
                            kind: PendingKind::CredentialOffer { offer },
                        },
                    );
                }
                self.persist()?;
                Ok(None)
            }
            MessageType::CredentialRequest => {
                let body: CredentialRequest = msg.body()?;
                let credential = self.issue_for(&conn, &msg.thread_id, &body)?;
                let reply = AgentMessage::new(MessageType::CredentialIssue, msg.thread_id, &CredentialIssue { credential });
                let sealed = Self::seal(&conn, &reply)?;
                self.record_sent(&reply, &conn.their_did);
                Ok(Some(sealed))
            }
            MessageType::CredentialIssue => {
                let body: CredentialIssue = msg.body()?;
                self.store_credential(&conn, body.credential)?;
                Ok(None)
            }
            MessageType::ProofPresentation | MessageType::ProblemReport => {
                let Some(hook) = self.hook() else {
                    return Ok(None);
                };
                match hook.on_message(&ConnectionView::from(&conn), &msg).await {
                    Some(reply) => {
                        let sealed = Self::seal(&conn, &reply)?;
                        self.record_sent(&reply, &conn.their_did);
                        Ok(Some(sealed))
                    }
                    None => Ok(None),
                }
            }
            other @ (MessageType::ConnectionRequest | MessageType::ConnectionResponse) => {
                Err(AgentError::UnexpectedMessage(other))
            }
        }
    }

    fn issue_for(&self, conn: &PairwiseConnection, thread_id: &str, body: &CredentialRequest) -> Result<Credential, AgentError> {
        let mut issuer = self.issuer.lock().expect("issuer lock");
        let identity = issuer.identity.clone().ok_or(AgentError::NotAnIssuer)?;
        let plan = issuer
            .plans
            .get(thread_id)
            .filter(|p| p.connection == conn.my_did && p.claim_def_seq_no == body.claim_def_seq_no)
            .ok_or_else(|| AgentError::UnknownThread(thread_id.to_owned()))?;
        if body.subject_did != conn.their_did {
            return Err(AgentError::MalformedMessage("credential subject must be the requester's pairwise DID".into()));
        }
        let credential = credentials::issue_credential(
            &self.registry,
            &identity,
            plan.claim_def_seq_no,
            &body.subject_did,
            plan.values.clone(),
        )?;
        issuer.plans.remove(thread_id);
        Ok(credential)
    }

    fn store_credential(&self, conn: &PairwiseConnection, credential: Credential) -> Result<String, AgentError> {
        if credential.subject_did != conn.my_did {
            return Err(AgentError::MalformedMessage("credential is not about this connection's DID".into()));
        }
        credential.verify_integrity(&self.registry)?;
        let id = random_id();
        self.wallet()
            .credentials
            .insert(id.clone(), StoredCredential { id: id.clone(), credential });
        self.persist()?;
        Ok(id)
    }

    /// Offers a credential over `values` on an established connection. The
    /// credential is issued when the holder's CREDENTIAL_REQUEST arrives.
    pub async fn offer_credential(
        &self,
        my_did: &Did,
        claim_def_seq_no: u64,
        values: BTreeMap<String, AttributeValue>,
    ) -> Result<String, AgentError> {
        let conn = self.established(my_did)?;
        let issuer_did = {
            let st = self.issuer.lock().expect("issuer lock");
            st.identity.as_ref().ok_or(AgentError::NotAnIssuer)?.did.clone()
        };
        let claim_def = self
            .registry
            .get_claim_def(claim_def_seq_no)
            .map_err(|_| CredentialError::UnknownClaimDef(claim_def_seq_no))?;
        if claim_def.issuer_did != issuer_did {
            return Err(CredentialError::ClaimDefMismatch.into());
        }
        let schema = self.registry.get_schema(claim_def.schema_seq_no).map_err(CredentialError::from)?;
        let thread_id = random_id();
        self.issuer.lock().expect("issuer lock").plans.insert(
            thread_id.clone(),
            IssuancePlan { connection: my_did.clone(), claim_def_seq_no, values },
        );
        let offer = CredentialOffer {
            claim_def_seq_no,
            schema_seq_no: claim_def.schema_seq_no,
            issuer_did,
            attr_names: schema.attr_names,
        };
        let msg = AgentMessage::new(MessageType::CredentialOffer, thread_id.clone(), &offer);
        if let Err(e) = self.transmit(&conn, &msg).await {
            self.issuer.lock().expect("issuer lock").plans.remove(&thread_id);
            return Err(e);
        }
        Ok(thread_id)
    }

    /// Sends a proof request; the answer arrives through the hook.
    pub async fn send_proof_request(&self, my_did: &Did, request: &ProofRequest) -> Result<String, AgentError> {
        let conn = self.established(my_did)?;
        let thread_id = random_id();
        let msg = AgentMessage::new(MessageType::ProofRequest, thread_id.clone(), &ProofRequestBody { request: request.clone() });
        self.transmit(&conn, &msg).await?;
        Ok(thread_id)
    }

    /// Answers a pending proof request or credential offer. The entry is
    /// taken atomically, so each request is answered at most once; it is put
    /// back if nothing could be sent.
    pub async fn respond(&self, pending_id: &str, decision: Decision) -> Result<ConsentOutcome, AgentError> {
        let pending = self
            .wallet()
            .pending_requests
            .remove(pending_id)
            .ok_or_else(|| AgentError::UnknownPending(pending_id.to_owned()))?;
        let result = match &pending.kind {
            PendingKind::ProofRequest { request } => self.answer_proof(&pending, request, decision).await,
            PendingKind::CredentialOffer { offer } => self.answer_offer(&pending, offer, decision).await,
        };
        match &result {
            Err(e) if !Self::was_sent(e) => {
                self.wallet().pending_requests.insert(pending.id.clone(), pending);
            }
            _ => {}
        }
        self.persist()?;
        result
    }

    fn was_sent(e: &AgentError) -> bool {
        matches!(e, AgentError::PeerProblem(_) | AgentError::Transport(TransportError::Rejected { .. }))
    }

    pub async fn respond_to_proof_request(&self, pending_id: &str, decision: Decision) -> Result<ConsentOutcome, AgentError> {
        let is_proof = matches!(
            self.wallet().pending_requests.get(pending_id).map(|p| &p.kind),
            Some(PendingKind::ProofRequest { .. })
        );
        if !is_proof {
            return Err(AgentError::UnknownPending(pending_id.to_owned()));
        }
        self.respond(pending_id, decision).await
    }

    async fn answer_proof(
        &self,
        pending: &PendingRequest,
        request: &ProofRequest,
        decision: Decision,
    ) -> Result<ConsentOutcome, AgentError> {
        let conn = self.established(&pending.connection)?;
        let msg = match decision {
            Decision::Deny => AgentMessage::problem(pending.thread_id.clone(), CONSENT_DENIED),
            Decision::Approve { disclosed, credential_id } => {
                let (credential, keypair) = {
                    let w = self.wallet();
                    let stored = match &credential_id {
                        Some(id) => w.credentials.get(id).filter(|s| credential_matches(&s.credential, request)),
                        None => w.credentials.values().find(|s| credential_matches(&s.credential, request)),
                    }
                    .ok_or(AgentError::NoMatchingCredential)?;
                    let kp = w
                        .keypair_for(&stored.credential.subject_did)
                        .cloned()
                        .ok_or(AgentError::NoMatchingCredential)?;
                    (stored.credential.clone(), kp)
                };
                let disclosed = disclosed
                    .unwrap_or_else(|| request.required().into_iter().map(str::to_owned).collect());
                let presentation = create_presentation(&keypair, &credential, request, &disclosed)?;
                AgentMessage::new(
                    MessageType::ProofPresentation,
                    pending.thread_id.clone(),
                    &ProofPresentationBody { presentation },
                )
            }
        };
        let reply = self.transmit(&conn, &msg).await?;
        self.wallet().consumed_nonces.insert(request.nonce_hex());
        if let Some(r) = &reply {
            if r.msg_type == MessageType::ProblemReport {
                let p: ProblemReport = r.body()?;
                return Err(AgentError::PeerProblem(p.reason));
            }
        }
        Ok(ConsentOutcome { pending_id: pending.id.clone(), sent: msg.msg_type, reply, credential_id: None })
    }

    async fn answer_offer(
        &self,
        pending: &PendingRequest,
        offer: &CredentialOffer,
        decision: Decision,
    ) -> Result<ConsentOutcome, AgentError> {
        let conn = self.established(&pending.connection)?;
        let msg = match decision {
            Decision::Deny => AgentMessage::problem(pending.thread_id.clone(), CONSENT_DENIED),
            Decision::Approve { .. } => AgentMessage::new(
                MessageType::CredentialRequest,
                pending.thread_id.clone(),
                &CredentialRequest { claim_def_seq_no: offer.claim_def_seq_no, subject_did: conn.my_did.clone() },
            ),
        };
        let reply = self.transmit(&conn, &msg).await?;
        let mut credential_id = None;
        if msg.msg_type == MessageType::CredentialRequest {
            let r = reply.clone().ok_or_else(|| AgentError::MalformedMessage("no credential issued".into()))?;
            match r.msg_type {
                MessageType::CredentialIssue => {
                    let body: CredentialIssue = r.body()?;
                    credential_id = Some(self.store_credential(&conn, body.credential)?);
                }
                MessageType::ProblemReport => {
                    let p: ProblemReport = r.body()?;
                    return Err(AgentError::PeerProblem(p.reason));
                }
                other => return Err(AgentError::UnexpectedMessage(other)),
            }
        }
        Ok(ConsentOutcome { pending_id: pending.id.clone(), sent: msg.msg_type, reply, credential_id })
    }
}
