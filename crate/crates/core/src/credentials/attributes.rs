use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use super::CredentialError;

/// The OpenID Connect standard claims, in table order.
pub const OIDC_STANDARD_CLAIMS: [&str; 19] = [
    "sub",
    "name",
    "given_name",
    "family_name",
    "middle_name",
    "nickname",
    "profile",
    "picture",
    "website",
    "email",
    "email_verified",
    "gender",
    "birthdate",
    "zoneinfo",
    "locale",
    "phone_number",
    "phone_number_verified",
    "address",
    "updated_at",
];

/// A credential attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Bool(bool),
    Number(Number),
    String(String),
    Object(Map<String, Value>),
}

impl AttributeValue {
    pub fn kind(&self) -> ClaimType {
        match self {
            AttributeValue::Bool(_) => ClaimType::Boolean,
            AttributeValue::Number(_) => ClaimType::Number,
            AttributeValue::String(_) => ClaimType::String,
            AttributeValue::Object(_) => ClaimType::Object,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttributeValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttributeValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttributeValue::Number(n) => n.as_i64(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("attribute values are JSON")
    }
}

impl From<&str> for AttributeValue {
    fn from(s: &str) -> Self {
        AttributeValue::String(s.to_owned())
    }
}

impl From<String> for AttributeValue {
    fn from(s: String) -> Self {
        AttributeValue::String(s)
    }
}

impl From<bool> for AttributeValue {
    fn from(b: bool) -> Self {
        AttributeValue::Bool(b)
    }
}

impl From<i64> for AttributeValue {
    fn from(n: i64) -> Self {
        AttributeValue::Number(n.into())
    }
}

impl From<Map<String, Value>> for AttributeValue {
    fn from(m: Map<String, Value>) -> Self {
        AttributeValue::Object(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimType {
    String,
    Boolean,
    Number,
    Object,
}

impl fmt::Display for ClaimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClaimType::String => "string",
            ClaimType::Boolean => "boolean",
            ClaimType::Number => "number",
            ClaimType::Object => "object",
        })
    }
}

/// Expected JSON type of a standard claim: strings, except `*_verified`
/// (boolean), `address` (object) and `updated_at` (number). Predicate
/// attributes are booleans. Other names are untyped.
pub fn expected_type(name: &str) -> Option<ClaimType> {
    if predicate_min_age(name).is_some() {
        return Some(ClaimType::Boolean);
    }
    if !OIDC_STANDARD_CLAIMS.contains(&name) {
        return None;
    }
    Some(match name {
        n if n.ends_with("_verified") => ClaimType::Boolean,
        "address" => ClaimType::Object,
        "updated_at" => ClaimType::Number,
        _ => ClaimType::String,
    })
}

pub fn check_type(name: &str, value: &AttributeValue) -> Result<(), CredentialError> {
    match expected_type(name) {
        Some(expected) if expected != value.kind() => Err(CredentialError::TypeMismatch {
            attribute: name.to_owned(),
            expected,
            actual: value.kind(),
        }),
        _ => Ok(()),
    }
}

/// `over_<N>` names an issuer-computed boolean: the subject's age on the
/// issuance date is at least N.
pub fn predicate_min_age(name: &str) -> Option<u32> {
    let digits = name.strip_prefix("over_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

pub fn is_predicate(name: &str) -> bool {
    predicate_min_age(name).is_some()
}

/// Whole years between `birthdate` (YYYY-MM-DD) and the UTC date of `now`.
pub fn age_on(birthdate: &str, now: i64) -> Result<u32, CredentialError> {
    let born = NaiveDate::parse_from_str(birthdate, "%Y-%m-%d")
        .map_err(|_| CredentialError::InvalidBirthdate(birthdate.to_owned()))?;
    let today = DateTime::from_timestamp(now, 0)
        .ok_or_else(|| CredentialError::InvalidBirthdate(format!("clock value {now}")))?
        .date_naive();
    if today < born {
        return Err(CredentialError::InvalidBirthdate(format!("{birthdate} is in the future")));
    }
    let mut years = today.year() - born.year();
    if (today.month(), today.day()) < (born.month(), born.day()) {
        years -= 1;
    }
    Ok(years as u32)
}

pub(crate) fn derive_predicate(
    name: &str,
    birthdate: Option<&AttributeValue>,
    now: i64,
) -> Result<AttributeValue, CredentialError> {
    let min_age = predicate_min_age(name).expect("caller checked predicate name");
    let birthdate = birthdate
        .and_then(AttributeValue::as_str)
        .ok_or_else(|| CredentialError::InvalidBirthdate(format!("{name} needs a birthdate string")))?;
    Ok(AttributeValue::Bool(age_on(birthdate, now)? >= min_age))
}
