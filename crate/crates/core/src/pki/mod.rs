//! Ledger-anchored PKI: domain names bound to verkeys through NYM aliases,
//! X.509-shaped certificate credentials from CA DIDs, and revocation by NYM
//! update.

mod capacity;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use capacity::{avg_renewal_tps, time_to_record, CapacityModel, CapacityReport, RENEWAL_TPS_BOUND, SECONDS_PER_DAY};

use crate::credentials::{self, AttributeValue, Credential, CredentialError};
use crate::identity::{Did, Identity, KeyPair, Verkey};
use crate::registry::{NymPayload, Registry, RegistryError, Role, TxnPayload};

pub const X509_SCHEMA_NAME: &str = "x509-certificate";
pub const X509_SCHEMA_VERSION: &str = "1.0";
pub const X509_ATTRIBUTES: [&str; 10] = [
    "version",
    "serial_number",
    "issuer_dn",
    "subject_dn",
    "not_before",
    "not_after",
    "subject_public_key",
    "signature_algorithm",
    "subject_alt_names",
    "is_ca",
];

#[derive(Debug, Error)]
pub enum PkiError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("{0} is not a trustee")]
    NotATrustee(Did),
    #[error("{0} is not a CA")]
    NotACa(Did),
    #[error("unknown domain DID {0}")]
    UnknownDomain(Did),
    #[error("subject_public_key does not match the domain's ledger verkey")]
    SubjectKeyMismatch,
    #[error("not_before is after not_after")]
    InvalidValidity,
    #[error("subject_alt_names must include {0}")]
    MissingAltName(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// X.509 fields carried as credential attributes. Times are epoch seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFields {
    pub version: String,
    pub serial_number: String,
    pub issuer_dn: String,
    pub subject_dn: String,
    pub not_before: i64,
    pub not_after: i64,
    pub subject_public_key: Verkey,
    pub signature_algorithm: String,
    pub subject_alt_names: Vec<String>,
    pub is_ca: bool,
}

impl CertificateFields {
    /// Leaf certificate for `domain` valid for `days` from `not_before`.
    pub fn leaf(ca_name: &str, domain: &str, key: Verkey, serial: u64, not_before: i64, days: i64) -> Self {
        CertificateFields {
            version: "3".into(),
            serial_number: format!("{serial:x}"),
            issuer_dn: format!("CN={ca_name}"),
            subject_dn: format!("CN={domain}"),
            not_before,
            not_after: not_before + days * SECONDS_PER_DAY as i64,
            subject_public_key: key,
            signature_algorithm: "Ed25519".into(),
            subject_alt_names: vec![domain.to_owned()],
            is_ca: false,
        }
    }

    pub fn to_values(&self) -> BTreeMap<String, AttributeValue> {
        let mut v = BTreeMap::new();
        v.insert("version".into(), self.version.clone().into());
        v.insert("serial_number".into(), self.serial_number.clone().into());
        v.insert("issuer_dn".into(), self.issuer_dn.clone().into());
        v.insert("subject_dn".into(), self.subject_dn.clone().into());
        v.insert("not_before".into(), self.not_before.into());
        v.insert("not_after".into(), self.not_after.into());
        v.insert("subject_public_key".into(), self.subject_public_key.to_base58().into());
        v.insert("signature_algorithm".into(), self.signature_algorithm.clone().into());
        v.insert("subject_alt_names".into(), self.subject_alt_names.join(",").into());
        v.insert("is_ca".into(), self.is_ca.into());
        v
    }

    pub fn from_credential(c: &Credential) -> Option<Self> {
        let s = |n: &str| c.value(n).and_then(AttributeValue::as_str).map(str::to_owned);
        let n = |n: &str| c.value(n).and_then(AttributeValue::as_i64);
        Some(CertificateFields {
            version: s("version")?,
            serial_number: s("serial_number")?,
            issuer_dn: s("issuer_dn")?,
            subject_dn: s("subject_dn")?,
            not_before: n("not_before")?,
            not_after: n("not_after")?,
            subject_public_key: Verkey::from_base58(&s("subject_public_key")?).ok()?,
            signature_algorithm: s("signature_algorithm")?,
            subject_alt_names: s("subject_alt_names")?.split(',').filter(|x| !x.is_empty()).map(str::to_owned).collect(),
            is_ca: c.value("is_ca").and_then(AttributeValue::as_bool)?,
        })
    }
}

/// Outcome of a chain check; `diagnostic` names the first failing check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ChainCheck {
    fn ok() -> Self {
        ChainCheck { valid: true, diagnostic: None }
    }

    fn fail(why: impl Into<String>) -> Self {
        ChainCheck { valid: false, diagnostic: Some(why.into()) }
    }
}

/// Registers a CA as a STEWARD NYM aliased with its name.
pub fn register_ca(registry: &Registry, trustee: &Identity, ca_did: &Did, ca_verkey: Verkey, alias: &str) -> Result<u64, PkiError> {
    let rec = registry.resolve_nym(&trustee.did)?;
    if rec.role != Role::Trustee {
        return Err(PkiError::NotATrustee(trustee.did.clone()));
    }
    Ok(registry.submit(
        &trustee.did,
        &trustee.keypair,
        TxnPayload::Nym(NymPayload { dest: ca_did.clone(), verkey: ca_verkey, alias: Some(alias.to_owned()), role: Role::Steward }),
    )?)
}

/// Registers the X.509 schema once and the CA's claim definition over it.
pub fn setup_ca_claim_def(registry: &Registry, ca: &Identity) -> Result<u64, PkiError> {
    let schema = match registry.find_schema(X509_SCHEMA_NAME, X509_SCHEMA_VERSION) {
        Some(s) => s,
        None => credentials::register_schema(registry, ca, X509_SCHEMA_NAME, X509_SCHEMA_VERSION, &X509_ATTRIBUTES)?,
    };
    if let Some(def) = registry.find_claim_def(schema, &ca.did, "x509") {
        return Ok(def);
    }
    Ok(credentials::register_claim_def(registry, ca, schema, "x509")?)
}

/// Binds `domain` to `verkey`. The domain DID is derived from the key.
pub fn register_domain(registry: &Registry, ca: &Identity, domain: &str, verkey: Verkey) -> Result<(Did, u64), PkiError> {
    let did = Did::from_verkey(&verkey);
    let seq = registry.submit(
        &ca.did,
        &ca.keypair,
        TxnPayload::Nym(NymPayload { dest: did.clone(), verkey, alias: Some(domain.to_owned()), role: Role::None }),
    )?;
    Ok((did, seq))
}

/// Installs `new_verkey` for the domain, keeping its alias.
pub fn rotate_domain_key(
    registry: &Registry,
    submitter: &Did,
    keypair: &KeyPair,
    domain_did: &Did,
    new_verkey: Verkey,
) -> Result<u64, PkiError> {
    let rec = registry.resolve_nym(domain_did).map_err(|_| PkiError::UnknownDomain(domain_did.clone()))?;
    Ok(registry.submit(
        submitter,
        keypair,
        TxnPayload::Nym(NymPayload { dest: domain_did.clone(), verkey: new_verkey, alias: rec.alias, role: rec.role }),
    )?)
}

/// Revokes every certificate bound to the domain's current key by
/// installing a fresh random key nobody holds.
pub fn revoke_domain_key(registry: &Registry, ca: &Identity, domain_did: &Did) -> Result<u64, PkiError> {
    rotate_domain_key(registry, &ca.did, &ca.keypair, domain_did, KeyPair::generate().verkey())
}

pub fn issue_certificate_vc(
    registry: &Registry,
    ca: &Identity,
    claim_def_seq_no: u64,
    domain_did: &Did,
    fields: &CertificateFields,
) -> Result<Credential, PkiError> {
    let ca_rec = registry.resolve_nym(&ca.did)?;
    if ca_rec.role < Role::Steward {
        return Err(PkiError::NotACa(ca.did.clone()));
    }
    if fields.not_before > fields.not_after {
        return Err(PkiError::InvalidValidity);
    }
    let domain = registry.resolve_nym(domain_did).map_err(|_| PkiError::UnknownDomain(domain_did.clone()))?;
    if domain.verkey != fields.subject_public_key {
        return Err(PkiError::SubjectKeyMismatch);
    }
    if let Some(alias) = &domain.alias {
        if !fields.subject_alt_names.contains(alias) {
            return Err(PkiError::MissingAltName(alias.clone()));
        }
    }
    Ok(credentials::issue_credential(registry, ca, claim_def_seq_no, domain_did, fields.to_values())?)
}

/// Follows creator links from `did` back to a genesis trustee.
fn anchored_in_genesis(registry: &Registry, did: &Did) -> Result<(), String> {
    let mut seen = HashSet::new();
    let mut cur = did.clone();
    loop {
        if !seen.insert(cur.clone()) {
            return Err("creator links form a cycle".into());
        }
        let prov = registry.nym_provenance(&cur).map_err(|_| format!("{cur} is not on the ledger"))?;
        if prov.in_genesis {
            return Ok(());
        }
        cur = prov.creator;
    }
}

/// Checks, in order: certificate shape, CA role, genesis anchoring of the
/// CA, credential signature, alias binding and validity window.
pub fn verify_certificate_chain(domain: &str, cert: &Credential, registry: &Registry, at_time: i64) -> ChainCheck {
    match registry.get_schema(cert.schema_seq_no) {
        Ok(s) if s.name == X509_SCHEMA_NAME => {}
        _ => return ChainCheck::fail("not a certificate"),
    }
    let Some(fields) = CertificateFields::from_credential(cert) else {
        return ChainCheck::fail("malformed certificate");
    };
    match registry.resolve_nym(&cert.issuer_did) {
        Ok(rec) if rec.role >= Role::Steward => {}
        Ok(_) => return ChainCheck::fail("issuer is not a CA"),
        Err(_) => return ChainCheck::fail("unknown CA"),
    }
    if let Err(why) = anchored_in_genesis(registry, &cert.issuer_did) {
        return ChainCheck::fail(format!("not anchored in genesis: {why}"));
    }
    if let Err(e) = cert.verify_integrity(registry) {
        return ChainCheck::fail(format!("bad signature: {e}"));
    }
    let Ok(binding) = registry.lookup_alias(domain) else {
        return ChainCheck::fail("unknown domain");
    };
    if binding.did != cert.subject_did || !fields.subject_alt_names.iter().any(|n| n == domain) {
        return ChainCheck::fail("subject mismatch");
    }
    if binding.verkey != fields.subject_public_key {
        return ChainCheck::fail("alias key mismatch");
    }
    if at_time < fields.not_before {
        return ChainCheck::fail("not yet valid");
    }
    if at_time > fields.not_after {
        return ChainCheck::fail("expired");
    }
    ChainCheck::ok()
}
