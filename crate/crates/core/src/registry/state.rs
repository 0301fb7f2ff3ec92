use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::txn::{
    ClaimDefPayload, Digest, LedgerTransaction, NymPayload, Role, SchemaPayload, TxnPayload, MAX_ALIAS_CHARS,
};
use super::RegistryError;
use crate::identity::{self, Did, Verkey};

/// Current ledger state of one DID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NymRecord {
    pub did: Did,
    pub verkey: Verkey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    pub role: Role,
    /// Sequence number of the NYM that produced this state.
    pub seq_no: u64,
}

/// Who first wrote a DID to the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NymProvenance {
    pub creator: Did,
    pub created_seq: u64,
    pub in_genesis: bool,
}

#[derive(Debug, Clone)]
struct NymEntry {
    record: NymRecord,
    creator: Did,
    created_seq: u64,
    retired_verkeys: HashSet<Verkey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Genesis,
    Open,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct LedgerState {
    pub(crate) txns: Vec<LedgerTransaction>,
    pub(crate) genesis_height: u64,
    nyms: HashMap<Did, NymEntry>,
    aliases: HashMap<String, Did>,
    schemas: HashMap<(String, String), u64>,
    claim_defs: HashSet<(u64, Did, String)>,
}

fn is_dotted_numeric(version: &str) -> bool {
    !version.is_empty() && version.split('.').all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
}

impl LedgerState {
    pub(crate) fn height(&self) -> u64 {
        self.txns.len() as u64
    }

    pub(crate) fn tip(&self) -> Digest {
        self.txns.last().map(|t| t.txn_hash).unwrap_or(Digest::ZERO)
    }

    pub(crate) fn nym(&self, did: &Did) -> Option<&NymRecord> {
        self.nyms.get(did).map(|e| &e.record)
    }

    pub(crate) fn provenance(&self, did: &Did) -> Option<NymProvenance> {
        self.nyms.get(did).map(|e| NymProvenance {
            creator: e.creator.clone(),
            created_seq: e.created_seq,
            in_genesis: e.created_seq <= self.genesis_height,
        })
    }

    pub(crate) fn alias(&self, alias: &str) -> Option<&NymRecord> {
        self.aliases.get(alias).and_then(|did| self.nym(did))
    }

    pub(crate) fn schema_seq(&self, name: &str, version: &str) -> Option<u64> {
        self.schemas.get(&(name.to_owned(), version.to_owned())).copied()
    }

    pub(crate) fn has_claim_def(&self, schema_seq_no: u64, issuer: &Did, tag: &str) -> bool {
        self.claim_defs.contains(&(schema_seq_no, issuer.clone(), tag.to_owned()))
    }

    /// Validate `txn` as the next entry without changing state.
    pub(crate) fn check(&self, txn: &LedgerTransaction, phase: Phase) -> Result<(), RegistryError> {
        let expected_seq = self.height() + 1;
        if txn.seq_no != expected_seq {
            return Err(RegistryError::Chain(format!("seq_no {} where {} expected", txn.seq_no, expected_seq)));
        }
        if txn.prev_hash != self.tip() {
            return Err(RegistryError::Chain("prev_hash does not match previous txn_hash".into()));
        }
        if txn.txn_type != txn.payload.txn_type() {
            return Err(RegistryError::Chain(format!(
                "txn_type {} does not match payload {}",
                txn.txn_type,
                txn.payload.txn_type()
            )));
        }
        if txn.txn_hash != txn.compute_hash() {
            return Err(RegistryError::Chain("txn_hash does not match contents".into()));
        }
        self.check_submission(&txn.payload, &txn.submitter_did, &txn.signature, phase)
    }

    /// Signature, ACL and uniqueness rules for a submission.
    pub(crate) fn check_submission(
        &self,
        payload: &TxnPayload,
        submitter: &Did,
        signature: &identity::Signature,
        phase: Phase,
    ) -> Result<(), RegistryError> {
        if phase == Phase::Genesis {
            return self.check_genesis_entry(payload, submitter, signature);
        }
        let submitter_rec = self.nym(submitter).ok_or_else(|| RegistryError::UnknownSubmitter(submitter.clone()))?;
        if !identity::verify(&submitter_rec.verkey, &payload.signing_bytes(), signature) {
            return Err(RegistryError::BadSignature);
        }
        match payload {
            TxnPayload::Nym(nym) => self.check_nym(nym, submitter, submitter_rec.role),
            TxnPayload::Schema(schema) => self.check_schema(schema, submitter_rec.role),
            TxnPayload::ClaimDef(def) => self.check_claim_def(def, submitter_rec),
        }
    }

    fn check_genesis_entry(
        &self,
        payload: &TxnPayload,
        submitter: &Did,
        signature: &identity::Signature,
    ) -> Result<(), RegistryError> {
        let TxnPayload::Nym(nym) = payload else {
            return Err(RegistryError::NonTrusteeInGenesis);
        };
        if nym.role != Role::Trustee || &nym.dest != submitter || self.nyms.contains_key(&nym.dest) {
            return Err(RegistryError::NonTrusteeInGenesis);
        }
        if !identity::verify(&nym.verkey, &payload.signing_bytes(), signature) {
            return Err(RegistryError::BadSignature);
        }
        self.check_nym_fields(nym)?;
        if !nym.dest.is_derived_from(&nym.verkey) {
            return Err(RegistryError::DestMismatch);
        }
        Ok(())
    }

    fn check_nym_fields(&self, nym: &NymPayload) -> Result<(), RegistryError> {
        if let Some(alias) = &nym.alias {
            if alias.is_empty() || alias.chars().count() > MAX_ALIAS_CHARS {
                return Err(RegistryError::InvalidPayload(format!(
                    "alias must be 1..={MAX_ALIAS_CHARS} characters"
                )));
            }
            if let Some(owner) = self.aliases.get(alias) {
                if owner != &nym.dest {
                    return Err(RegistryError::DuplicateAlias(alias.clone()));
                }
            }
        }
        Ok(())
    }

    fn check_nym(&self, nym: &NymPayload, submitter: &Did, submitter_role: Role) -> Result<(), RegistryError> {
        match self.nyms.get(&nym.dest) {
            None => {
                if submitter_role < Role::required_to_grant(nym.role) {
                    return Err(RegistryError::InsufficientRole { have: submitter_role, need: Role::required_to_grant(nym.role) });
                }
                if !nym.dest.is_derived_from(&nym.verkey) {
                    return Err(RegistryError::DestMismatch);
                }
            }
            Some(existing) => {
                let may_update = submitter == &nym.dest || submitter == &existing.creator || submitter_role == Role::Trustee;
                if !may_update {
                    return Err(RegistryError::NotAuthorized(nym.dest.clone()));
                }
                if nym.role != existing.record.role {
                    let need = Role::required_to_grant(nym.role).max(existing.record.role);
                    if submitter == &nym.dest || submitter_role < need {
                        return Err(RegistryError::InsufficientRole { have: submitter_role, need });
                    }
                }
                if existing.retired_verkeys.contains(&nym.verkey) {
                    return Err(RegistryError::VerkeyReuse);
                }
            }
        }
        self.check_nym_fields(nym)
    }

    fn check_schema(&self, schema: &SchemaPayload, submitter_role: Role) -> Result<(), RegistryError> {
        if submitter_role < Role::Endorser {
            return Err(RegistryError::InsufficientRole { have: submitter_role, need: Role::Endorser });
        }
        if schema.name.is_empty() {
            return Err(RegistryError::InvalidPayload("schema name is empty".into()));
        }
        if !is_dotted_numeric(&schema.version) {
            return Err(RegistryError::InvalidPayload(format!("version {:?} is not dotted numeric", schema.version)));
        }
        if schema.attr_names.is_empty() {
            return Err(RegistryError::InvalidPayload("attr_names is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &schema.attr_names {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(RegistryError::InvalidPayload(format!("attribute name {name:?} empty or repeated")));
            }
        }
        if self.schema_seq(&schema.name, &schema.version).is_some() {
            return Err(RegistryError::DuplicateSchema { name: schema.name.clone(), version: schema.version.clone() });
        }
        Ok(())
    }

    fn check_claim_def(&self, def: &ClaimDefPayload, submitter: &NymRecord) -> Result<(), RegistryError> {
        if submitter.role < Role::Endorser {
            return Err(RegistryError::InsufficientRole { have: submitter.role, need: Role::Endorser });
        }
        match self.txns.get((def.schema_seq_no as usize).wrapping_sub(1)) {
            Some(t) if matches!(t.payload, TxnPayload::Schema(_)) => {}
            _ => return Err(RegistryError::UnknownSchema(def.schema_seq_no)),
        }
        if def.issuer_did != submitter.did || def.issuer_verkey != submitter.verkey {
            return Err(RegistryError::InvalidPayload("claim definition issuer must be the submitter with its current verkey".into()));
        }
        if self.has_claim_def(def.schema_seq_no, &def.issuer_did, &def.tag) {
            return Err(RegistryError::DuplicateClaimDef);
        }
        Ok(())
    }

    /// Append a transaction that has passed [`check`](Self::check).
    pub(crate) fn apply(&mut self, txn: LedgerTransaction) {
        match &txn.payload {
            TxnPayload::Nym(nym) => {
                let record = NymRecord {
                    did: nym.dest.clone(),
                    verkey: nym.verkey,
                    alias: nym.alias.clone(),
                    role: nym.role,
                    seq_no: txn.seq_no,
                };
                if let Some(entry) = self.nyms.get_mut(&nym.dest) {
                    if let Some(old) = &entry.record.alias {
                        if nym.alias.as_ref() != Some(old) {
                            self.aliases.remove(old);
                        }
                    }
                    if entry.record.verkey != nym.verkey {
                        entry.retired_verkeys.insert(entry.record.verkey);
                    }
                    entry.record = record;
                } else {
                    self.nyms.insert(
                        nym.dest.clone(),
                        NymEntry {
                            record,
                            creator: txn.submitter_did.clone(),
                            created_seq: txn.seq_no,
                            retired_verkeys: HashSet::new(),
                        },
                    );
                }
                if let Some(alias) = &nym.alias {
                    self.aliases.insert(alias.clone(), nym.dest.clone());
                }
            }
            TxnPayload::Schema(schema) => {
                self.schemas.insert((schema.name.clone(), schema.version.clone()), txn.seq_no);
            }
            TxnPayload::ClaimDef(def) => {
                self.claim_defs.insert((def.schema_seq_no, def.issuer_did.clone(), def.tag.clone()));
            }
        }
        self.txns.push(txn);
    }

    /// Rebuild state from a transaction list. The genesis prefix is the
    /// leading run of self-signed TRUSTEE NYMs for new DIDs.
    pub(crate) fn replay(txns: &[LedgerTransaction], genesis_len: Option<u64>) -> Result<Self, (u64, RegistryError)> {
        let mut state = LedgerState::default();
        let mut in_genesis = true;
        for (i, txn) in txns.iter().enumerate() {
            let pos = i as u64 + 1;
            if in_genesis {
                let still_genesis = match genesis_len {
                    Some(n) => state.height() < n,
                    None => state.check(txn, Phase::Genesis).is_ok(),
                };
                if still_genesis {
                    state.check(txn, Phase::Genesis).map_err(|e| (pos, e))?;
                    state.genesis_height = state.height() + 1;
                    state.apply(txn.clone());
                    continue;
                }
                in_genesis = false;
                if state.height() == 0 {
                    return Err((pos, RegistryError::EmptyGenesis));
                }
            }
            state.check(txn, Phase::Open).map_err(|e| (pos, e))?;
            state.apply(txn.clone());
        }
        if state.height() == 0 {
            return Err((1, RegistryError::EmptyGenesis));
        }
        Ok(state)
    }
}
