use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::attributes::AttributeValue;
use super::credential::{current_verkey, issuer_signing_bytes, load_definition};
use super::presentation::{Presentation, ProofRequest};
use super::CredentialError;
use crate::identity::{self, Did, NoPairwise, PairwiseResolver};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NonceState {
    Outstanding,
    Consumed,
}

/// Outstanding proof-request nonces of one verifier.
#[derive(Debug, Default)]
pub struct NonceStore {
    nonces: Mutex<HashMap<[u8; 16], NonceState>>,
}

impl NonceStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the request's nonce outstanding. Returns false if it was seen before.
    pub fn register(&self, request: &ProofRequest) -> bool {
        let mut map = self.nonces.lock().expect("nonce store poisoned");
        if map.contains_key(&request.nonce) {
            return false;
        }
        map.insert(request.nonce, NonceState::Outstanding);
        true
    }

    pub fn is_outstanding(&self, nonce: &[u8; 16]) -> bool {
        self.nonces.lock().expect("nonce store poisoned").get(nonce) == Some(&NonceState::Outstanding)
    }

    pub fn is_consumed(&self, nonce: &[u8; 16]) -> bool {
        self.nonces.lock().expect("nonce store poisoned").get(nonce) == Some(&NonceState::Consumed)
    }

    /// Atomically moves an outstanding nonce to consumed.
    pub fn consume(&self, nonce: &[u8; 16]) -> Result<(), CredentialError> {
        let mut map = self.nonces.lock().expect("nonce store poisoned");
        match map.get_mut(nonce) {
            Some(state @ NonceState::Outstanding) => {
                *state = NonceState::Consumed;
                Ok(())
            }
            Some(NonceState::Consumed) => Err(CredentialError::NonceConsumed),
            None => Err(CredentialError::UnknownNonce),
        }
    }
}

pub struct VerifyOptions<'a> {
    pub pairwise: &'a dyn PairwiseResolver,
    pub trusted_issuers: Option<&'a BTreeSet<Did>>,
}

impl Default for VerifyOptions<'_> {
    fn default() -> Self {
        VerifyOptions { pairwise: &NoPairwise, trusted_issuers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedClaims {
    pub issuer_did: Did,
    pub subject_did: Did,
    pub schema_seq_no: u64,
    pub claims: BTreeMap<String, AttributeValue>,
}

impl VerifiedClaims {
    pub fn get(&self, name: &str) -> Option<&AttributeValue> {
        self.claims.get(name)
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.claims.keys().map(String::as_str).collect()
    }
}

/// Subject key: pairwise store, then ledger, then a DID derived from the
/// presented verkey itself.
fn subject_verkey_ok(p: &Presentation, registry: &Registry, pairwise: &dyn PairwiseResolver) -> bool {
    let r = &p.credential_ref;
    let resolved = pairwise
        .resolve_pairwise(&r.subject_did)
        .map(|d| *d.verkey())
        .or_else(|| current_verkey(registry, &r.subject_did));
    match resolved {
        Some(vk) => vk == r.subject_verkey,
        None => r.subject_did.is_derived_from(&r.subject_verkey),
    }
}

/// Accepts `presentation` for `request`, consuming the nonce on success only.
pub fn verify_presentation(
    presentation: &Presentation,
    request: &ProofRequest,
    registry: &Registry,
    nonces: &NonceStore,
    opts: &VerifyOptions<'_>,
) -> Result<VerifiedClaims, CredentialError> {
    let r = &presentation.credential_ref;
    let def = load_definition(registry, r.claim_def_seq_no)?;
    if def.claim_def.schema_seq_no != r.schema_seq_no || def.claim_def.issuer_did != r.issuer_did {
        return Err(CredentialError::ClaimDefMismatch);
    }

    // (1) issuer signature under the issuer's current ledger verkey
    let issuer_vk = current_verkey(registry, &r.issuer_did).ok_or(CredentialError::IssuerSignature)?;
    let signed = issuer_signing_bytes(r.schema_seq_no, r.claim_def_seq_no, &r.subject_did, &r.commitments);
    if !identity::verify(&issuer_vk, &signed, &r.issuer_signature) {
        return Err(CredentialError::IssuerSignature);
    }

    // (2) revealed values against commitments
    let attrs = &def.schema.attr_names;
    if r.commitments.len() != attrs.len() {
        return Err(CredentialError::MalformedCredential(format!(
            "{} commitments for {} schema attributes",
            r.commitments.len(),
            attrs.len()
        )));
    }
    for (name, entry) in &presentation.revealed {
        let pos = attrs
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| CredentialError::UnknownAttribute(name.clone()))?;
        if entry.commitment(name) != r.commitments[pos] {
            return Err(CredentialError::CommitmentMismatch(name.clone()));
        }
    }

    // (3) holder signature over nonce, credential ref and revealed values
    if !subject_verkey_ok(presentation, registry, opts.pairwise)
        || !identity::verify(&r.subject_verkey, &presentation.signing_bytes(), &presentation.holder_signature)
    {
        return Err(CredentialError::HolderSignature);
    }

    for name in request.required() {
        if !presentation.revealed.contains_key(name) {
            return Err(CredentialError::MissingAttribute(name.to_owned()));
        }
    }
    request.check_restrictions(&r.issuer_did, r.schema_seq_no)?;
    for p in &request.requested_predicates {
        if presentation.revealed[p].value.as_bool() != Some(true) {
            return Err(CredentialError::PredicateNotSatisfied(p.clone()));
        }
    }

    // (5) trusted issuers
    if let Some(trusted) = opts.trusted_issuers {
        if !trusted.contains(&r.issuer_did) {
            return Err(CredentialError::UntrustedIssuer(r.issuer_did.clone()));
        }
    }

    // (4) nonce, consumed last so a failed attempt can be retried
    if presentation.proof_request_nonce != request.nonce {
        return Err(CredentialError::NonceMismatch);
    }
    nonces.consume(&request.nonce)?;

    Ok(VerifiedClaims {
        issuer_did: r.issuer_did.clone(),
        subject_did: r.subject_did.clone(),
        schema_seq_no: r.schema_seq_no,
        claims: presentation.revealed.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect(),
    })
}
