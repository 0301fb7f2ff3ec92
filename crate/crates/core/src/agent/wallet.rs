use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::message::CredentialOffer;
use crate::credentials::{Credential, ProofRequest};
use crate::identity::{Did, DidDocument, KeyPair, PairwiseResolver, Verkey};

#[derive(Debug, Error)]
pub enum WalletError {
    #[error("wallet checksum mismatch")]
    Checksum,
    #[error("wallet file is malformed: {0}")]
    Malformed(String),
    #[error("wallet io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConnectionState {
    Offered,
    Established,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseConnection {
    pub my_did: Did,
    pub my_keypair: KeyPair,
    pub their_did: Did,
    pub their_verkey: Verkey,
    pub their_endpoint: String,
    pub state: ConnectionState,
    pub label: String,
}

/// Offer key material kept by the offering agent until the offer is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferRecord {
    pub did: Did,
    pub keypair: KeyPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PendingKind {
    ProofRequest { request: ProofRequest },
    CredentialOffer { offer: CredentialOffer },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub id: String,
    pub connection: Did,
    pub thread_id: String,
    pub received_at: i64,
    #[serde(flatten)]
    pub kind: PendingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCredential {
    pub id: String,
    pub credential: Credential,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallet {
    #[serde(default)]
    pub keypairs: BTreeMap<Did, KeyPair>,
    #[serde(default)]
    pub connections: BTreeMap<Did, PairwiseConnection>,
    #[serde(default)]
    pub credentials: BTreeMap<String, StoredCredential>,
    #[serde(default)]
    pub pending_requests: BTreeMap<String, PendingRequest>,
    /// Nonces of proof requests this wallet has already answered.
    #[serde(default)]
    pub consumed_nonces: BTreeSet<String>,
    #[serde(default)]
    pub open_offers: BTreeMap<String, OfferRecord>,
    #[serde(default)]
    pub used_offers: BTreeSet<String>,
}

const CHECKSUM_PREFIX: &str = "sha256:";

impl Wallet {
    pub fn connection_by_my_verkey(&self, verkey: &Verkey) -> Option<&PairwiseConnection> {
        self.connections.values().find(|c| c.my_keypair.verkey() == *verkey)
    }

    pub fn offer_by_verkey(&self, verkey: &Verkey) -> Option<(&String, &OfferRecord)> {
        self.open_offers.iter().find(|(_, o)| o.keypair.verkey() == *verkey)
    }

    /// Key pair controlling one of this wallet's DIDs.
    pub fn keypair_for(&self, did: &Did) -> Option<&KeyPair> {
        self.connections.get(did).map(|c| &c.my_keypair).or_else(|| self.keypairs.get(did))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_string(self).expect("wallet is JSON");
        let sum = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{body}\n{CHECKSUM_PREFIX}{sum}\n").into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WalletError> {
        if bytes.is_empty() {
            return Ok(Wallet::default());
        }
        let text = std::str::from_utf8(bytes).map_err(|_| WalletError::Checksum)?;
        let text = text.strip_suffix('\n').ok_or(WalletError::Checksum)?;
        let (body, trailer) = text.rsplit_once('\n').ok_or(WalletError::Checksum)?;
        let sum = trailer.strip_prefix(CHECKSUM_PREFIX).ok_or(WalletError::Checksum)?;
        if hex::encode(Sha256::digest(body.as_bytes())) != sum {
            return Err(WalletError::Checksum);
        }
        serde_json::from_str(body).map_err(|e| WalletError::Malformed(e.to_string()))
    }

    /// Writes atomically with owner-only permissions.
    pub fn save(&self, path: &Path) -> Result<(), WalletError> {
        let tmp = path.with_extension("tmp");
        {
            let mut opts = fs::OpenOptions::new();
            opts.write(true).create(true).truncate(true);
            #[cfg(unix)]
            {
                use std::os::unix::fs::OpenOptionsExt;
                opts.mode(0o600);
            }
            let mut f = opts.open(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// A missing or empty file yields a fresh wallet.
    pub fn load(path: &Path) -> Result<Self, WalletError> {
        match fs::read(path) {
            Ok(bytes) => Self::from_bytes(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Wallet::default()),
            Err(e) => Err(e.into()),
        }
    }
}

impl PairwiseResolver for Wallet {
    fn resolve_pairwise(&self, did: &Did) -> Option<DidDocument> {
        self.connections.values().find(|c| &c.their_did == did).map(|c| DidDocument {
            id: did.clone(),
            verkeys: vec![c.their_verkey],
            service_endpoint: Some(c.their_endpoint.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::Identity;

    fn sample() -> Wallet {
        let mut w = Wallet::default();
        for i in 0..3 {
            let me = Identity::generate();
            let them = Identity::generate();
            w.connections.insert(
                me.did.clone(),
                PairwiseConnection {
                    my_did: me.did,
                    my_keypair: me.keypair,
                    their_did: them.did,
                    their_verkey: them.keypair.verkey(),
                    their_endpoint: format!("http://127.0.0.1:{}", 9000 + i),
                    state: ConnectionState::Established,
                    label: format!("peer {i}"),
                },
            );
        }
        w.consumed_nonces.insert("00".repeat(16));
        w
    }

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wallet.json");
        let w = sample();
        w.save(&path).unwrap();
        assert_eq!(Wallet::load(&path).unwrap(), w);

        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o600);
        }

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(Wallet::load(&path), Err(WalletError::Checksum)));
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Wallet::load(&path), Err(WalletError::Checksum)));
    }

    #[test]
    fn body_edit_breaks_checksum() {
        let mut bytes = sample().to_bytes();
        bytes[5] ^= 0x01;
        assert!(matches!(Wallet::from_bytes(&bytes), Err(WalletError::Checksum)));
    }

    #[test]
    fn missing_or_empty_file_is_fresh() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.json");
        assert_eq!(Wallet::load(&path).unwrap(), Wallet::default());
        fs::write(&path, b"").unwrap();
        assert_eq!(Wallet::load(&path).unwrap(), Wallet::default());
    }

    #[test]
    fn pairwise_resolution_uses_their_side() {
        let w = sample();
        let c = w.connections.values().next().unwrap();
        let doc = w.resolve_pairwise(&c.their_did).unwrap();
        assert_eq!(doc.verkeys, vec![c.their_verkey]);
        assert!(w.resolve_pairwise(&c.my_did).is_none());
        assert_eq!(w.keypair_for(&c.my_did).unwrap().verkey(), c.my_keypair.verkey());
    }
}
