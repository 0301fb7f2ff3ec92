//! Canonical JSON and strict binary-field encodings.
//!
//! Everything that is hashed or signed goes through [`to_canonical_vec`]:
//! object keys sorted lexicographically, no insignificant whitespace, UTF-8.
//! Decoders in this module reject any input that does not re-encode to the
//! exact same bytes, so two distinct byte strings never decode to one value.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("input is not in canonical form")]
    NonCanonical,
}

fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut sorted = Map::new();
            for (k, v) in entries {
                sorted.insert(k, sort_keys(v));
            }
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical form of an already-built JSON value.
pub fn canonical_value_bytes(value: &Value) -> Vec<u8> {
    serde_json::to_vec(&sort_keys(value.clone())).expect("JSON values always serialize")
}

pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("domain types serialize to JSON");
    serde_json::to_vec(&sort_keys(value)).expect("JSON values always serialize")
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_vec(value)).expect("serde_json emits UTF-8")
}

/// Parse `bytes` and require that they are exactly the canonical encoding of
/// the decoded value.
pub fn from_canonical_slice<T: DeserializeOwned + Serialize>(bytes: &[u8]) -> Result<T, CodecError> {
    let value: T = serde_json::from_slice(bytes)?;
    if to_canonical_vec(&value) != bytes {
        return Err(CodecError::NonCanonical);
    }
    Ok(value)
}

fn decode_hex_strict(s: &str) -> Result<Vec<u8>, String> {
    let bytes = hex::decode(s).map_err(|e| e.to_string())?;
    if hex::encode(&bytes) != s {
        return Err("hex must be lowercase".into());
    }
    Ok(bytes)
}

fn decode_b64url_strict(s: &str) -> Result<Vec<u8>, String> {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;
    URL_SAFE_NO_PAD.decode(s).map_err(|e| e.to_string())
}

pub fn b64url_encode(bytes: &[u8]) -> String {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn b64url_decode(s: &str) -> Result<Vec<u8>, String> {
    decode_b64url_strict(s)
}

/// Lowercase hex for `Vec<u8>` fields.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::decode_hex_strict(&s).map_err(serde::de::Error::custom)
    }
}

/// Lowercase hex for fixed-size byte arrays.
pub mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = super::decode_hex_strict(&s).map_err(serde::de::Error::custom)?;
        let len = bytes.len();
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {N} bytes, got {len}")))
    }
}

/// Unpadded base64url for `Vec<u8>` fields.
pub mod b64url_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64url_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::decode_b64url_strict(&s).map_err(serde::de::Error::custom)
    }
}

/// Unpadded base64url for fixed-size byte arrays.
pub mod b64url_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64url_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = super::decode_b64url_strict(&s).map_err(serde::de::Error::custom)?;
        let len = bytes.len();
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {N} bytes, got {len}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_recursively() {
        let v = json!({"b": 1, "a": {"z": true, "c": [ {"y": 1, "x": 2} ]}});
        assert_eq!(
            to_canonical_string(&v),
            r#"{"a":{"c":[{"x":2,"y":1}],"z":true},"b":1}"#
        );
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Blob {
        #[serde(with = "hex_array")]
        digest: [u8; 4],
        #[serde(with = "b64url_bytes")]
        body: Vec<u8>,
    }

    #[test]
    fn strict_decoding_rejects_alternate_spellings() {
        let blob = Blob { digest: [0xab, 0xcd, 0, 1], body: vec![0xff, 0xfe] };
        let bytes = to_canonical_vec(&blob);
        assert_eq!(from_canonical_slice::<Blob>(&bytes).unwrap(), blob);

        let upper = String::from_utf8(bytes.clone()).unwrap().replace("abcd", "ABCD");
        assert!(from_canonical_slice::<Blob>(upper.as_bytes()).is_err());

        let spaced = String::from_utf8(bytes).unwrap().replace(':', ": ");
        assert!(matches!(
            from_canonical_slice::<Blob>(spaced.as_bytes()),
            Err(CodecError::NonCanonical)
        ));
    }

    #[test]
    fn wrong_array_length_is_rejected() {
        let err = serde_json::from_str::<Blob>(r#"{"body":"","digest":"abcd"}"#).unwrap_err();
        assert!(err.to_string().contains("expected 4 bytes"));
    }
}
