//! Authenticated public-key encryption between two Ed25519 identities.
//!
//! Both Ed25519 keys are mapped to their X25519 (Montgomery) form and the
//! plaintext is sealed with XSalsa20-Poly1305 under the resulting shared
//! secret. The sender additionally signs `recipient_verkey || nonce ||
//! ciphertext` with its signing key.
//!
//! Opening checks, in order: the envelope is addressed to us, the AEAD tag
//! authenticates under (our secret, claimed sender key), and the sender
//! signature verifies under the claimed sender key.

use crypto_box::aead::{Aead, AeadCore, OsRng};
use crypto_box::{PublicKey, SalsaBox, SecretKey};
use serde::{Deserialize, Serialize};

use super::{keys, IdentityError, KeyPair, Signature, Verkey};
use crate::codec;

pub const NONCE_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthcryptEnvelope {
    pub sender_verkey: Verkey,
    pub recipient_verkey: Verkey,
    #[serde(with = "codec::b64url_array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "codec::b64url_bytes")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "codec::b64url_array")]
    pub sender_signature: [u8; 64],
}

impl AuthcryptEnvelope {
    pub fn to_json(&self) -> String {
        codec::to_canonical_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, IdentityError> {
        serde_json::from_str(text).map_err(|e| IdentityError::MalformedEnvelope(e.to_string()))
    }

    fn signed_bytes(recipient: &Verkey, nonce: &[u8; NONCE_LEN], ciphertext: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + NONCE_LEN + ciphertext.len());
        out.extend_from_slice(recipient.as_bytes());
        out.extend_from_slice(nonce);
        out.extend_from_slice(ciphertext);
        out
    }
}

fn montgomery(verkey: &Verkey) -> Result<PublicKey, IdentityError> {
    Ok(PublicKey::from(verkey.verifying_key()?.to_montgomery().to_bytes()))
}

fn salsa_box(ours: &KeyPair, theirs: &Verkey) -> Result<SalsaBox, IdentityError> {
    let secret = SecretKey::from(ours.x25519_secret());
    Ok(SalsaBox::new(&montgomery(theirs)?, &secret))
}

pub fn auth_encrypt(
    sender: &KeyPair,
    recipient_verkey: &Verkey,
    plaintext: &[u8],
) -> Result<AuthcryptEnvelope, IdentityError> {
    let cipher = salsa_box(sender, recipient_verkey)?;
    let nonce = SalsaBox::generate_nonce(&mut OsRng);
    let ciphertext = cipher
        .encrypt(&nonce, plaintext)
        .map_err(|_| IdentityError::Authentication)?;
    let nonce: [u8; NONCE_LEN] = nonce.into();
    let signature = sender.sign(&AuthcryptEnvelope::signed_bytes(recipient_verkey, &nonce, &ciphertext));
    Ok(AuthcryptEnvelope {
        sender_verkey: sender.verkey(),
        recipient_verkey: *recipient_verkey,
        nonce,
        ciphertext,
        sender_signature: signature.to_bytes(),
    })
}

/// Returns the plaintext and the authenticated sender key.
pub fn auth_decrypt(recipient: &KeyPair, envelope: &AuthcryptEnvelope) -> Result<(Vec<u8>, Verkey), IdentityError> {
    if envelope.recipient_verkey != recipient.verkey() {
        return Err(IdentityError::WrongRecipient);
    }
    let cipher = salsa_box(recipient, &envelope.sender_verkey)?;
    let plaintext = cipher
        .decrypt(envelope.nonce.as_slice().into(), envelope.ciphertext.as_slice())
        .map_err(|_| IdentityError::Authentication)?;
    let signed = AuthcryptEnvelope::signed_bytes(&envelope.recipient_verkey, &envelope.nonce, &envelope.ciphertext);
    if !keys::verify(&envelope.sender_verkey, &signed, &Signature::from_bytes(envelope.sender_signature)) {
        return Err(IdentityError::SenderSignature);
    }
    Ok((plaintext, envelope.sender_verkey))
}
