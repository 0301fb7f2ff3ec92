use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::attributes::{check_type, derive_predicate, is_predicate, AttributeValue};
use super::CredentialError;
use crate::codec::{self, hex_array};
use crate::identity::{self, Did, Identity, Signature, Verkey};
use crate::registry::{ClaimDefPayload, Digest, Registry, SchemaPayload, TxnPayload};

pub const SALT_LEN: usize = 16;

/// Per-attribute blinding salt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Salt(#[serde(with = "hex_array")] pub [u8; SALT_LEN]);

impl Salt {
    pub fn random() -> Self {
        let mut b = [0u8; SALT_LEN];
        rand::rngs::OsRng.fill_bytes(&mut b);
        Salt(b)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeEntry {
    pub value: AttributeValue,
    pub salt: Salt,
}

impl AttributeEntry {
    pub fn commitment(&self, name: &str) -> Digest {
        commitment(&self.salt, name, &self.value)
    }
}

/// SHA-256(salt || name || canonical(value)).
pub fn commitment(salt: &Salt, name: &str, value: &AttributeValue) -> Digest {
    let mut h = Sha256::new();
    h.update(salt.0);
    h.update(name.as_bytes());
    h.update(codec::to_canonical_vec(value));
    Digest(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credential {
    pub schema_seq_no: u64,
    pub claim_def_seq_no: u64,
    pub issuer_did: Did,
    pub subject_did: Did,
    pub attributes: BTreeMap<String, AttributeEntry>,
    pub commitments: Vec<Digest>,
    pub issuer_signature: Signature,
    pub issued_at: i64,
}

#[derive(Serialize)]
struct IssuerSigned<'a> {
    schema_seq_no: u64,
    claim_def_seq_no: u64,
    subject_did: &'a Did,
    commitments: &'a [Digest],
}

pub(crate) fn issuer_signing_bytes(
    schema_seq_no: u64,
    claim_def_seq_no: u64,
    subject_did: &Did,
    commitments: &[Digest],
) -> Vec<u8> {
    codec::to_canonical_vec(&IssuerSigned { schema_seq_no, claim_def_seq_no, subject_did, commitments })
}

pub(crate) struct CredentialDefinition {
    pub claim_def: ClaimDefPayload,
    pub schema: SchemaPayload,
}

pub(crate) fn load_definition(registry: &Registry, claim_def_seq_no: u64) -> Result<CredentialDefinition, CredentialError> {
    let claim_def = registry
        .get_claim_def(claim_def_seq_no)
        .map_err(|_| CredentialError::UnknownClaimDef(claim_def_seq_no))?;
    let schema = registry.get_schema(claim_def.schema_seq_no)?;
    Ok(CredentialDefinition { claim_def, schema })
}

pub(crate) fn current_verkey(registry: &Registry, did: &Did) -> Option<Verkey> {
    registry.resolve_nym(did).ok().map(|r| r.verkey)
}

impl Credential {
    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.keys().map(String::as_str)
    }

    pub fn value(&self, name: &str) -> Option<&AttributeValue> {
        self.attributes.get(name).map(|e| &e.value)
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        issuer_signing_bytes(self.schema_seq_no, self.claim_def_seq_no, &self.subject_did, &self.commitments)
    }

    /// Commitments cover every schema attribute in order, each recomputes
    /// from its (salt, name, value), and the issuer signature verifies under
    /// the issuer's current ledger verkey.
    pub fn verify_integrity(&self, registry: &Registry) -> Result<(), CredentialError> {
        let def = load_definition(registry, self.claim_def_seq_no)?;
        if def.claim_def.schema_seq_no != self.schema_seq_no || def.claim_def.issuer_did != self.issuer_did {
            return Err(CredentialError::ClaimDefMismatch);
        }
        let attrs = &def.schema.attr_names;
        if self.commitments.len() != attrs.len() || self.attributes.len() != attrs.len() {
            return Err(CredentialError::MalformedCredential(format!(
                "{} commitments and {} attributes for {} schema attributes",
                self.commitments.len(),
                self.attributes.len(),
                attrs.len()
            )));
        }
        for (name, expected) in attrs.iter().zip(&self.commitments) {
            let entry = self.attributes.get(name).ok_or_else(|| CredentialError::MissingAttribute(name.clone()))?;
            if entry.commitment(name) != *expected {
                return Err(CredentialError::CommitmentMismatch(name.clone()));
            }
        }
        let verkey = current_verkey(registry, &self.issuer_did).ok_or(CredentialError::IssuerSignature)?;
        if !identity::verify(&verkey, &self.signing_bytes(), &self.issuer_signature) {
            return Err(CredentialError::IssuerSignature);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        codec::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, CredentialError> {
        Ok(codec::from_canonical_slice(s.as_bytes())?)
    }
}

pub fn register_schema(
    registry: &Registry,
    issuer: &Identity,
    name: &str,
    version: &str,
    attr_names: &[&str],
) -> Result<u64, CredentialError> {
    if attr_names.is_empty() {
        return Err(CredentialError::InvalidSchema("no attributes".into()));
    }
    let mut seen = HashSet::new();
    for a in attr_names {
        if a.is_empty() {
            return Err(CredentialError::InvalidSchema("empty attribute name".into()));
        }
        if !seen.insert(*a) {
            return Err(CredentialError::InvalidSchema(format!("duplicate attribute {a}")));
        }
    }
    let payload = TxnPayload::Schema(SchemaPayload {
        name: name.to_owned(),
        version: version.to_owned(),
        attr_names: attr_names.iter().map(|s| s.to_string()).collect(),
    });
    Ok(registry.submit(&issuer.did, &issuer.keypair, payload)?)
}

pub fn register_claim_def(
    registry: &Registry,
    issuer: &Identity,
    schema_seq_no: u64,
    tag: &str,
) -> Result<u64, CredentialError> {
    let payload = TxnPayload::ClaimDef(ClaimDefPayload {
        schema_seq_no,
        issuer_did: issuer.did.clone(),
        issuer_verkey: issuer.verkey(),
        tag: tag.to_owned(),
    });
    Ok(registry.submit(&issuer.did, &issuer.keypair, payload)?)
}

/// Issues a credential over `values`, which must name every schema
/// attribute except `over_<N>` predicates. Predicates are computed here from
/// `birthdate` at the registry clock.
pub fn issue_credential(
    registry: &Registry,
    issuer: &Identity,
    claim_def_seq_no: u64,
    subject_did: &Did,
    values: BTreeMap<String, AttributeValue>,
) -> Result<Credential, CredentialError> {
    let def = load_definition(registry, claim_def_seq_no)?;
    if def.claim_def.issuer_did != issuer.did {
        return Err(CredentialError::ClaimDefMismatch);
    }
    if current_verkey(registry, &issuer.did) != Some(issuer.verkey()) {
        return Err(CredentialError::IssuerKey);
    }
    let attrs = &def.schema.attr_names;
    if let Some(p) = values.keys().find(|k| is_predicate(k)) {
        return Err(CredentialError::PredicateSupplied(p.clone()));
    }
    let wanted: BTreeSet<&str> = attrs.iter().map(String::as_str).filter(|a| !is_predicate(a)).collect();
    let given: BTreeSet<&str> = values.keys().map(String::as_str).collect();
    if wanted != given {
        return Err(CredentialError::AttributeSetMismatch {
            missing: wanted.difference(&given).map(|s| s.to_string()).collect(),
            extra: given.difference(&wanted).map(|s| s.to_string()).collect(),
        });
    }
    for (name, value) in &values {
        check_type(name, value)?;
    }

    let issued_at = registry.clock().now();
    let mut attributes = BTreeMap::new();
    let mut commitments = Vec::with_capacity(attrs.len());
    for name in attrs {
        let value = if is_predicate(name) {
            derive_predicate(name, values.get("birthdate"), issued_at)?
        } else {
            values[name].clone()
        };
        let entry = AttributeEntry { value, salt: Salt::random() };
        commitments.push(entry.commitment(name));
        attributes.insert(name.clone(), entry);
    }
    let bytes = issuer_signing_bytes(def.claim_def.schema_seq_no, claim_def_seq_no, subject_did, &commitments);
    Ok(Credential {
        schema_seq_no: def.claim_def.schema_seq_no,
        claim_def_seq_no,
        issuer_did: issuer.did.clone(),
        subject_did: subject_did.clone(),
        attributes,
        commitments,
        issuer_signature: issuer.keypair.sign(&bytes),
        issued_at,
    })
}

