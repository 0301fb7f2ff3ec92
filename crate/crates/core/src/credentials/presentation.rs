use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::attributes::is_predicate;
use super::credential::{AttributeEntry, Credential};
use super::CredentialError;
use crate::codec::{self, hex_array};
use crate::identity::{Did, KeyPair, Signature, Verkey};
use crate::registry::Digest;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Restriction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_did: Option<Did>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_seq_no: Option<u64>,
}

impl Restriction {
    fn check(&self, issuer_did: &Did, schema_seq_no: u64) -> Result<(), String> {
        if let Some(want) = &self.issuer_did {
            if want != issuer_did {
                return Err(format!("issuer {issuer_did} is not {want}"));
            }
        }
        if let Some(want) = self.schema_seq_no {
            if want != schema_seq_no {
                return Err(format!("schema {schema_seq_no} is not {want}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestedAttribute {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrictions: Option<Restriction>,
}

impl RequestedAttribute {
    pub fn new(name: impl Into<String>) -> Self {
        RequestedAttribute { name: name.into(), restrictions: None }
    }

    pub fn restricted(name: impl Into<String>, restriction: Restriction) -> Self {
        RequestedAttribute { name: name.into(), restrictions: Some(restriction) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofRequest {
    pub name: String,
    #[serde(with = "hex_array")]
    pub nonce: [u8; 16],
    pub requested_attributes: Vec<RequestedAttribute>,
    #[serde(default)]
    pub requested_predicates: Vec<String>,
}

impl ProofRequest {
    /// Builds a request with a fresh random nonce.
    pub fn new(
        name: impl Into<String>,
        requested_attributes: Vec<RequestedAttribute>,
        requested_predicates: Vec<String>,
    ) -> Result<Self, CredentialError> {
        let mut nonce = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let req = ProofRequest { name: name.into(), nonce, requested_attributes, requested_predicates };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), CredentialError> {
        let mut seen = BTreeSet::new();
        for a in &self.requested_attributes {
            if a.name.is_empty() {
                return Err(CredentialError::InvalidProofRequest("empty attribute name".into()));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(CredentialError::InvalidProofRequest(format!("{} requested twice", a.name)));
            }
        }
        for p in &self.requested_predicates {
            if !is_predicate(p) {
                return Err(CredentialError::InvalidProofRequest(format!("{p} is not a predicate")));
            }
            if !seen.insert(p.as_str()) {
                return Err(CredentialError::InvalidProofRequest(format!("{p} requested twice")));
            }
        }
        Ok(())
    }

    /// Every attribute and predicate the holder must disclose.
    pub fn required(&self) -> BTreeSet<&str> {
        self.requested_attributes
            .iter()
            .map(|a| a.name.as_str())
            .chain(self.requested_predicates.iter().map(String::as_str))
            .collect()
    }

    pub(crate) fn check_restrictions(&self, issuer_did: &Did, schema_seq_no: u64) -> Result<(), CredentialError> {
        for a in &self.requested_attributes {
            if let Some(r) = &a.restrictions {
                r.check(issuer_did, schema_seq_no)
                    .map_err(|why| CredentialError::RestrictionMismatch(format!("{}: {why}", a.name)))?;
            }
        }
        Ok(())
    }

    pub fn nonce_hex(&self) -> String {
        hex::encode(self.nonce)
    }

    pub fn to_json(&self) -> String {
        codec::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, CredentialError> {
        let req: Self = codec::from_canonical_slice(s.as_bytes())?;
        req.validate()?;
        Ok(req)
    }
}

/// The public part of a credential. `subject_verkey` lets a verifier bind a
/// pairwise subject DID that is not on the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialRef {
    pub schema_seq_no: u64,
    pub claim_def_seq_no: u64,
    pub issuer_did: Did,
    pub subject_did: Did,
    pub subject_verkey: Verkey,
    pub commitments: Vec<Digest>,
    pub issuer_signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Presentation {
    #[serde(with = "hex_array")]
    pub proof_request_nonce: [u8; 16],
    pub credential_ref: CredentialRef,
    pub revealed: BTreeMap<String, AttributeEntry>,
    pub holder_signature: Signature,
}

#[derive(Serialize)]
struct HolderSigned<'a> {
    #[serde(with = "hex_array")]
    proof_request_nonce: [u8; 16],
    credential_ref: &'a CredentialRef,
    revealed: &'a BTreeMap<String, AttributeEntry>,
}

impl Presentation {
    pub fn signing_bytes(&self) -> Vec<u8> {
        holder_signing_bytes(&self.proof_request_nonce, &self.credential_ref, &self.revealed)
    }

    pub fn to_json(&self) -> String {
        codec::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, CredentialError> {
        Ok(codec::from_canonical_slice(s.as_bytes())?)
    }
}

fn holder_signing_bytes(
    nonce: &[u8; 16],
    credential_ref: &CredentialRef,
    revealed: &BTreeMap<String, AttributeEntry>,
) -> Vec<u8> {
    codec::to_canonical_vec(&HolderSigned { proof_request_nonce: *nonce, credential_ref, revealed })
}

/// Discloses exactly `disclosed` from `credential`, signed by the holder.
pub fn create_presentation(
    holder: &KeyPair,
    credential: &Credential,
    request: &ProofRequest,
    disclosed: &BTreeSet<String>,
) -> Result<Presentation, CredentialError> {
    request.validate()?;
    for name in request.required() {
        if !disclosed.contains(name) || !credential.attributes.contains_key(name) {
            return Err(CredentialError::MissingAttribute(name.to_owned()));
        }
    }
    if let Some(extra) = disclosed.iter().find(|d| !credential.attributes.contains_key(*d)) {
        return Err(CredentialError::UnknownAttribute(extra.clone()));
    }
    request.check_restrictions(&credential.issuer_did, credential.schema_seq_no)?;
    for p in &request.requested_predicates {
        if credential.value(p).and_then(|v| v.as_bool()) != Some(true) {
            return Err(CredentialError::PredicateNotSatisfied(p.clone()));
        }
    }

    let credential_ref = CredentialRef {
        schema_seq_no: credential.schema_seq_no,
        claim_def_seq_no: credential.claim_def_seq_no,
        issuer_did: credential.issuer_did.clone(),
        subject_did: credential.subject_did.clone(),
        subject_verkey: holder.verkey(),
        commitments: credential.commitments.clone(),
        issuer_signature: credential.issuer_signature,
    };
    let revealed: BTreeMap<String, AttributeEntry> =
        disclosed.iter().map(|n| (n.clone(), credential.attributes[n].clone())).collect();
    let holder_signature = holder.sign(&holder_signing_bytes(&request.nonce, &credential_ref, &revealed));
    Ok(Presentation { proof_request_nonce: request.nonce, credential_ref, revealed, holder_signature })
}
