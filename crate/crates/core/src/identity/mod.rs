//! Keys, DIDs, DID documents and authcrypt envelopes.

mod authcrypt;
mod did;
mod keys;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use authcrypt::{auth_decrypt, auth_encrypt, AuthcryptEnvelope, NONCE_LEN};
pub use did::{generate_did, parse_did, Did, LOCAL_METHOD};
pub use keys::{sign, verify, verify_raw, KeyPair, Signature, Verkey};

use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("not a DID")]
    NotADid,
    #[error("invalid DID: {0}")]
    InvalidDid(String),
    #[error("seed must be 32 bytes, got {0}")]
    BadSeedLength(usize),
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("envelope is addressed to a different key")]
    WrongRecipient,
    #[error("authenticated decryption failed")]
    Authentication,
    #[error("sender signature does not verify")]
    SenderSignature,
    #[error("unresolvable DID {0}")]
    Unresolvable(Did),
}

/// A DID together with the key pair that controls it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub did: Did,
    pub keypair: KeyPair,
}

impl Identity {
    pub fn generate() -> Self {
        let (did, keypair) = generate_did(None).expect("unseeded generation cannot fail");
        Identity { did, keypair }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        let (did, keypair) = generate_did(Some(&seed)).expect("32-byte seed");
        Identity { did, keypair }
    }

    pub fn verkey(&self) -> Verkey {
        self.keypair.verkey()
    }
}

/// Resolution result for a DID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub id: Did,
    pub verkeys: Vec<Verkey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_endpoint: Option<String>,
}

impl DidDocument {
    pub fn verkey(&self) -> &Verkey {
        &self.verkeys[0]
    }
}

/// Local store of pairwise peers. Pairwise DIDs are never written to the
/// ledger, so only the agent that holds the connection can resolve them.
pub trait PairwiseResolver {
    fn resolve_pairwise(&self, did: &Did) -> Option<DidDocument>;
}

/// Resolver with no pairwise peers.
pub struct NoPairwise;

impl PairwiseResolver for NoPairwise {
    fn resolve_pairwise(&self, _did: &Did) -> Option<DidDocument> {
        None
    }
}

/// Pairwise store first, then the ledger's current NYM state.
pub fn resolve_did_document(
    did: &Did,
    registry: &Registry,
    pairwise: &dyn PairwiseResolver,
) -> Result<DidDocument, IdentityError> {
    if let Some(doc) = pairwise.resolve_pairwise(did) {
        return Ok(doc);
    }
    match registry.resolve_nym(did) {
        Ok(record) => Ok(DidDocument { id: did.clone(), verkeys: vec![record.verkey], service_endpoint: None }),
        Err(_) => Err(IdentityError::Unresolvable(did.clone())),
    }
}
