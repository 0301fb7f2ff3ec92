use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{IdentityError, KeyPair, Verkey};

/// Method name for DIDs anchored on the local registry.
pub const LOCAL_METHOD: &str = "desk";

/// A decentralized identifier, `did:<method>:<identifier>`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    method: String,
    identifier: String,
}

impl Did {
    pub fn new(method: &str, identifier: &str) -> Result<Self, IdentityError> {
        if method.is_empty() {
            return Err(IdentityError::InvalidDid("empty method".into()));
        }
        if !method.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()) {
            return Err(IdentityError::InvalidDid(format!("invalid method name {method:?}")));
        }
        if identifier.is_empty() {
            return Err(IdentityError::InvalidDid("empty identifier".into()));
        }
        if identifier.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(IdentityError::InvalidDid("identifier contains whitespace".into()));
        }
        Ok(Self { method: method.to_owned(), identifier: identifier.to_owned() })
    }

    /// Locally anchored DID: base58 of the first 16 bytes of the initial verkey.
    pub fn from_verkey(verkey: &Verkey) -> Self {
        Self {
            method: LOCAL_METHOD.to_owned(),
            identifier: bs58::encode(&verkey.as_bytes()[..16]).into_string(),
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    /// True when the identifier is the 16-byte verkey prefix rule applied to `verkey`.
    pub fn is_derived_from(&self, verkey: &Verkey) -> bool {
        bs58::decode(&self.identifier)
            .into_vec()
            .map(|bytes| bytes.as_slice() == &verkey.as_bytes()[..16])
            .unwrap_or(false)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{}:{}", self.method, self.identifier)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let rest = text.strip_prefix("did:").ok_or(IdentityError::NotADid)?;
        let (method, identifier) = rest.split_once(':').unwrap_or((rest, ""));
        Did::new(method, identifier)
    }
}

pub fn parse_did(text: &str) -> Result<Did, IdentityError> {
    text.parse()
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Create a fresh local DID. With a seed the result is deterministic.
pub fn generate_did(seed: Option<&[u8]>) -> Result<(Did, KeyPair), IdentityError> {
    let keypair = match seed {
        Some(seed) => {
            let seed: [u8; 32] = seed.try_into().map_err(|_| IdentityError::BadSeedLength(seed.len()))?;
            KeyPair::from_seed(seed)
        }
        None => KeyPair::generate(),
    };
    Ok((Did::from_verkey(&keypair.verkey()), keypair))
}
