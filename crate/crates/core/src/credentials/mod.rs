//! Verifiable credentials with salted-hash selective disclosure.

mod attributes;
mod credential;
mod presentation;
mod verify;

use thiserror::Error;

pub use attributes::{
    age_on, check_type, expected_type, is_predicate, predicate_min_age, AttributeValue, ClaimType, OIDC_STANDARD_CLAIMS,
};
pub use credential::{
    commitment, issue_credential, register_claim_def, register_schema, AttributeEntry, Credential, Salt, SALT_LEN,
};
pub use presentation::{create_presentation, CredentialRef, Presentation, ProofRequest, RequestedAttribute, Restriction};
pub use verify::{verify_presentation, NonceStore, VerifiedClaims, VerifyOptions};

use crate::codec::CodecError;
use crate::identity::Did;
use crate::registry::RegistryError;

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Encoding(#[from] CodecError),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid proof request: {0}")]
    InvalidProofRequest(String),
    #[error("unknown claim definition {0}")]
    UnknownClaimDef(u64),
    #[error("claim definition does not match the credential")]
    ClaimDefMismatch,
    #[error("issuer key does not match the ledger")]
    IssuerKey,
    #[error("attribute set mismatch: missing {missing:?}, unexpected {extra:?}")]
    AttributeSetMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("type mismatch for {attribute}: expected {expected}, got {actual}")]
    TypeMismatch { attribute: String, expected: ClaimType, actual: ClaimType },
    #[error("predicate {0} is computed by the issuer and must not be supplied")]
    PredicateSupplied(String),
    #[error("invalid birthdate: {0}")]
    InvalidBirthdate(String),
    #[error("malformed credential: {0}")]
    MalformedCredential(String),
    #[error("missing required attribute {0}")]
    MissingAttribute(String),
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("restriction mismatch: {0}")]
    RestrictionMismatch(String),
    #[error("predicate {0} not satisfied")]
    PredicateNotSatisfied(String),
    #[error("issuer signature does not verify under the ledger verkey")]
    IssuerSignature,
    #[error("commitment mismatch for {0}")]
    CommitmentMismatch(String),
    #[error("holder signature does not verify")]
    HolderSignature,
    #[error("nonce does not match the proof request")]
    NonceMismatch,
    #[error("no outstanding proof request with this nonce")]
    UnknownNonce,
    #[error("nonce consumed")]
    NonceConsumed,
    #[error("issuer {0} is not trusted")]
    UntrustedIssuer(Did),
}
