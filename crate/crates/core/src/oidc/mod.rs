//! OpenID Connect provider backed by credential presentations, and a
//! relying-party side validator.

pub mod client;
pub mod http;
mod jwt;
mod provider;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{
    client_validate_id_token, ExpectedToken, IdTokenError, RedirectResult, RelyingParty, RelyingPartyError,
};
pub use jwt::{decode_jwt, key_id, sign_jwt, DecodedJwt, JwsHeader, Jwk, Jwks};
pub use provider::{
    AuthSession, AuthorizeOutcome, AuthorizeRequest, LoginPage, Provider, SessionStatus, SessionView, TokenError,
    TokenRequest, TokenResponse, COOKIE_NAME,
};

use crate::agent::AgentError;
use crate::credentials::{CredentialError, OIDC_STANDARD_CLAIMS};
use crate::identity::Did;

pub const SESSION_TTL_SECS: i64 = 300;
pub const CODE_TTL_SECS: i64 = 60;
pub const ID_TOKEN_TTL_SECS: i64 = 300;

/// Claims the provider sets itself; everything else comes from a presentation.
pub const REGISTERED_CLAIMS: [&str; 6] = ["iss", "sub", "aud", "iat", "exp", "nonce"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Implicit,
    Code,
}

impl Flow {
    pub fn from_response_type(rt: &str) -> Option<Flow> {
        match rt {
            "id_token" => Some(Flow::Implicit),
            "code" => Some(Flow::Code),
            _ => None,
        }
    }

    pub fn response_type(self) -> &'static str {
        match self {
            Flow::Implicit => "id_token",
            Flow::Code => "code",
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::Implicit => "implicit",
            Flow::Code => "code",
        })
    }
}

impl std::str::FromStr for Flow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(Flow::Implicit),
            "code" => Ok(Flow::Code),
            other => Err(format!("unknown flow {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRegistration {
    pub client_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_secret: Option<String>,
    pub redirect_uris: Vec<String>,
    pub allowed_flows: BTreeSet<Flow>,
    /// Issuer-attested predicates such as `over_18` requested on every login.
    #[serde(default)]
    pub requested_predicates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Provider base URL; also the `iss` of every ID token.
    pub issuer: String,
    pub clients: Vec<ClientRegistration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trusted_issuers: Option<BTreeSet<Did>>,
}

pub const SCOPES: [&str; 5] = ["openid", "profile", "email", "phone", "address"];

fn scope_claims(scope: &str) -> Option<&'static [&'static str]> {
    Some(match scope {
        "openid" => &[],
        "profile" => &[
            "name",
            "given_name",
            "family_name",
            "middle_name",
            "nickname",
            "profile",
            "picture",
            "website",
            "gender",
            "birthdate",
            "zoneinfo",
            "locale",
            "updated_at",
        ],
        "email" => &["email", "email_verified"],
        "phone" => &["phone_number", "phone_number_verified"],
        "address" => &["address"],
        _ => return None,
    })
}

/// Attribute names to request for `scopes`, in standard-claims table order.
/// `sub` is never requested; it is the holder's pairwise DID.
pub fn claims_for_scopes<S: AsRef<str>>(scopes: &[S]) -> Result<Vec<&'static str>, OidcError> {
    let mut wanted = BTreeSet::new();
    for s in scopes {
        let claims = scope_claims(s.as_ref()).ok_or_else(|| OidcError::UnknownScope(s.as_ref().to_owned()))?;
        wanted.extend(claims.iter().copied());
    }
    Ok(OIDC_STANDARD_CLAIMS.iter().copied().filter(|c| wanted.contains(c)).collect())
}

#[derive(Debug, Error)]
pub enum OidcError {
    #[error("unknown client {0}")]
    UnknownClient(String),
    #[error("redirect_uri is not registered for the client")]
    UnregisteredRedirect,
    #[error("unknown scope {0}")]
    UnknownScope(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("session expired")]
    SessionExpired,
    #[error("session cannot move from {from:?} to {to:?}")]
    InvalidTransition { from: SessionStatus, to: SessionStatus },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
}

#[cfg(test)]
mod tests;
