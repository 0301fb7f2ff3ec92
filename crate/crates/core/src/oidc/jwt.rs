//! Compact JWS with EdDSA (Ed25519) and the matching JWK set.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::codec::{b64url_decode, b64url_encode, to_canonical_vec};
use crate::identity::{self, KeyPair, Signature, Verkey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwsHeader {
    pub alg: String,
    pub kid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typ: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jwk {
    pub kty: String,
    pub crv: String,
    pub x: String,
    pub kid: String,
    #[serde(rename = "use")]
    pub use_: String,
    pub alg: String,
}

impl Jwk {
    pub fn ed25519(verkey: &Verkey) -> Self {
        Jwk {
            kty: "OKP".into(),
            crv: "Ed25519".into(),
            x: b64url_encode(verkey.as_bytes()),
            kid: key_id(verkey),
            use_: "sig".into(),
            alg: "EdDSA".into(),
        }
    }

    pub fn verkey(&self) -> Option<Verkey> {
        if self.kty != "OKP" || self.crv != "Ed25519" {
            return None;
        }
        Verkey::from_slice(&b64url_decode(&self.x).ok()?).ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jwks {
    pub keys: Vec<Jwk>,
}

impl Jwks {
    pub fn find(&self, kid: &str) -> Option<&Jwk> {
        self.keys.iter().find(|k| k.kid == kid)
    }
}

/// First 8 bytes of SHA-256 over the raw public key, as hex.
pub fn key_id(verkey: &Verkey) -> String {
    hex::encode(&Sha256::digest(verkey.as_bytes())[..8])
}

pub fn sign_jwt(key: &KeyPair, claims: &Map<String, Value>) -> String {
    let header = JwsHeader { alg: "EdDSA".into(), kid: key_id(&key.verkey()), typ: Some("JWT".into()) };
    let signing_input = format!(
        "{}.{}",
        b64url_encode(&to_canonical_vec(&header)),
        b64url_encode(&to_canonical_vec(claims))
    );
    let sig = key.sign(signing_input.as_bytes());
    format!("{signing_input}.{}", b64url_encode(sig.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedJwt {
    pub header: JwsHeader,
    pub claims: Map<String, Value>,
    pub signing_input: String,
    pub signature: Vec<u8>,
}

pub fn decode_jwt(token: &str) -> Result<DecodedJwt, String> {
    let mut parts = token.split('.');
    let (Some(h), Some(p), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err("token must have three parts".into());
    };
    let header: JwsHeader =
        serde_json::from_slice(&b64url_decode(h)?).map_err(|e| format!("header: {e}"))?;
    let claims: Map<String, Value> =
        serde_json::from_slice(&b64url_decode(p)?).map_err(|e| format!("payload: {e}"))?;
    Ok(DecodedJwt { header, claims, signing_input: format!("{h}.{p}"), signature: b64url_decode(s)? })
}

impl DecodedJwt {
    pub fn verify(&self, verkey: &Verkey) -> bool {
        match Signature::from_slice(&self.signature) {
            Ok(sig) => identity::verify(verkey, self.signing_input.as_bytes(), &sig),
            Err(_) => false,
        }
    }
}
