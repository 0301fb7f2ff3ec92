use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AgentError;
use crate::codec;
use crate::credentials::{Credential, Presentation, ProofRequest};
use crate::identity::{Did, Verkey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageType {
    ConnectionRequest,
    ConnectionResponse,
    CredentialOffer,
    CredentialRequest,
    CredentialIssue,
    ProofRequest,
    ProofPresentation,
    ProblemReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentMessage {
    #[serde(rename = "type")]
    pub msg_type: MessageType,
    pub thread_id: String,
    pub body: Value,
}

impl AgentMessage {
    pub fn new<B: Serialize>(msg_type: MessageType, thread_id: impl Into<String>, body: &B) -> Self {
        AgentMessage {
            msg_type,
            thread_id: thread_id.into(),
            body: serde_json::to_value(body).expect("message bodies are JSON"),
        }
    }

    pub fn body<B: DeserializeOwned>(&self) -> Result<B, AgentError> {
        serde_json::from_value(self.body.clone())
            .map_err(|e| AgentError::MalformedMessage(format!("{:?} body: {e}", self.msg_type)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::to_canonical_vec(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AgentError> {
        serde_json::from_slice(bytes).map_err(|e| AgentError::MalformedMessage(e.to_string()))
    }

    pub fn problem(thread_id: impl Into<String>, reason: impl Into<String>) -> Self {
        AgentMessage::new(MessageType::ProblemReport, thread_id, &ProblemReport { reason: reason.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionRequest {
    pub offer_id: String,
    pub did: Did,
    pub verkey: Verkey,
    pub endpoint: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionResponse {
    pub offer_id: String,
    pub did: Did,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialOffer {
    pub claim_def_seq_no: u64,
    pub schema_seq_no: u64,
    pub issuer_did: Did,
    pub attr_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialRequest {
    pub claim_def_seq_no: u64,
    pub subject_did: Did,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialIssue {
    pub credential: Credential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofRequestBody {
    pub request: ProofRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofPresentationBody {
    pub presentation: Presentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemReport {
    pub reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_names_are_screaming_snake() {
        let m = AgentMessage::problem("t1", "consent denied");
        let json = String::from_utf8(m.to_bytes()).unwrap();
        assert_eq!(json, r#"{"body":{"reason":"consent denied"},"thread_id":"t1","type":"PROBLEM_REPORT"}"#);
        assert_eq!(AgentMessage::from_bytes(json.as_bytes()).unwrap(), m);
        let r: ProblemReport = m.body().unwrap();
        assert_eq!(r.reason, "consent denied");
    }

    #[test]
    fn wrong_body_shape_is_malformed() {
        let m = AgentMessage::new(MessageType::ProofRequest, "t", &serde_json::json!({"nope": 1}));
        assert!(matches!(m.body::<ProofRequestBody>(), Err(AgentError::MalformedMessage(_))));
    }
}
