use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::codec;
use crate::identity::{Did, Signature, Verkey};

/// Write permission levels, ordered `None < Endorser < Steward < Trustee`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    None,
    Endorser,
    Steward,
    Trustee,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Trustee, Role::Steward, Role::Endorser, Role::None];

    /// Role needed to create a NYM carrying `granted`.
    pub fn required_to_grant(granted: Role) -> Role {
        granted.max(Role::Endorser)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Trustee => "TRUSTEE",
            Role::Steward => "STEWARD",
            Role::Endorser => "ENDORSER",
            Role::None => "NONE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxnType {
    #[serde(rename = "NYM")]
    Nym,
    #[serde(rename = "SCHEMA")]
    Schema,
    #[serde(rename = "CLAIM_DEF")]
    ClaimDef,
}

impl fmt::Display for TxnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxnType::Nym => "NYM",
            TxnType::Schema => "SCHEMA",
            TxnType::ClaimDef => "CLAIM_DEF",
        })
    }
}

pub const MAX_ALIAS_CHARS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NymPayload {
    pub dest: Did,
    pub verkey: Verkey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaPayload {
    pub name: String,
    pub version: String,
    pub attr_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimDefPayload {
    pub schema_seq_no: u64,
    pub issuer_did: Did,
    pub issuer_verkey: Verkey,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxnPayload {
    Nym(NymPayload),
    Schema(SchemaPayload),
    ClaimDef(ClaimDefPayload),
}

impl TxnPayload {
    pub fn txn_type(&self) -> TxnType {
        match self {
            TxnPayload::Nym(_) => TxnType::Nym,
            TxnPayload::Schema(_) => TxnType::Schema,
            TxnPayload::ClaimDef(_) => TxnType::ClaimDef,
        }
    }

    /// The bytes a submitter signs.
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::to_canonical_vec(self)
    }
}

/// SHA-256 digest, lowercase hex on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        codec::hex_array::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        codec::hex_array::deserialize(d).map(Digest)
    }
}

/// One entry of the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerTransaction {
    pub seq_no: u64,
    pub txn_type: TxnType,
    pub payload: TxnPayload,
    pub submitter_did: Did,
    pub signature: Signature,
    pub timestamp: i64,
    pub prev_hash: Digest,
    pub txn_hash: Digest,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    seq_no: u64,
    txn_type: TxnType,
    payload: &'a TxnPayload,
    submitter_did: &'a Did,
    signature: &'a Signature,
    timestamp: i64,
    prev_hash: &'a Digest,
}

impl LedgerTransaction {
    /// Build a transaction and fill in its `txn_hash`.
    pub fn new(
        seq_no: u64,
        payload: TxnPayload,
        submitter_did: Did,
        signature: Signature,
        timestamp: i64,
        prev_hash: Digest,
    ) -> Self {
        let mut txn = LedgerTransaction {
            seq_no,
            txn_type: payload.txn_type(),
            payload,
            submitter_did,
            signature,
            timestamp,
            prev_hash,
            txn_hash: Digest::ZERO,
        };
        txn.txn_hash = txn.compute_hash();
        txn
    }

    pub fn compute_hash(&self) -> Digest {
        Digest::of(&codec::to_canonical_vec(&HashedFields {
            seq_no: self.seq_no,
            txn_type: self.txn_type,
            payload: &self.payload,
            submitter_did: &self.submitter_did,
            signature: &self.signature,
            timestamp: self.timestamp,
            prev_hash: &self.prev_hash,
        }))
    }

    /// One line of the JSON-lines ledger file, without the newline.
    pub fn to_line(&self) -> String {
        codec::to_canonical_string(self)
    }

    pub fn from_line(line: &[u8]) -> Result<Self, codec::CodecError> {
        codec::from_canonical_slice(line)
    }

    pub fn as_nym(&self) -> Option<&NymPayload> {
        match &self.payload {
            TxnPayload::Nym(n) => Some(n),
            _ => None,
        }
    }
}
