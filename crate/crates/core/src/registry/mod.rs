//! Append-only, hash-chained, permissioned transaction log.
//!
//! The ledger is a single serialized writer over an in-memory state guarded
//! by an `RwLock`; readers always observe a consistent prefix. When opened
//! from a file, every accepted transaction is appended to it as one
//! canonical JSON line before the in-memory state changes.

mod state;
mod txn;

pub mod http;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

pub use state::{NymProvenance, NymRecord};
pub use txn::{
    ClaimDefPayload, Digest, LedgerTransaction, NymPayload, Role, SchemaPayload, TxnPayload, TxnType, MAX_ALIAS_CHARS,
};

use crate::clock::SharedClock;
use crate::identity::{Did, KeyPair, Signature};
use state::{LedgerState, Phase};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown submitter {0}")]
    UnknownSubmitter(Did),
    #[error("bad signature")]
    BadSignature,
    #[error("insufficient role: have {have}, need {need}")]
    InsufficientRole { have: Role, need: Role },
    #[error("{0} may only be updated by itself, its creator or a trustee")]
    NotAuthorized(Did),
    #[error("duplicate alias {0:?}")]
    DuplicateAlias(String),
    #[error("duplicate schema {name} {version}")]
    DuplicateSchema { name: String, version: String },
    #[error("duplicate claim definition")]
    DuplicateClaimDef,
    #[error("unknown schema at seq_no {0}")]
    UnknownSchema(u64),
    #[error("DID identifier is not derived from the verkey")]
    DestMismatch,
    #[error("verkey was previously retired for this DID")]
    VerkeyReuse,
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("seq_no {0} out of range")]
    OutOfRange(u64),
    #[error("seq_no {seq_no} is a {actual} transaction, expected {expected}")]
    TypeMismatch { seq_no: u64, expected: TxnType, actual: TxnType },
    #[error("non-trustee in genesis")]
    NonTrusteeInGenesis,
    #[error("genesis is empty")]
    EmptyGenesis,
    #[error("chain broken: {0}")]
    Chain(String),
    #[error("broken chain at seq_no {seq_no}: {reason}")]
    BrokenChain { seq_no: u64, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("ledger file already exists: {0}")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of a full-chain verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainVerdict {
    Valid { height: u64 },
    Broken { seq_no: u64, reason: String },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid { .. })
    }

    pub fn failing_seq_no(&self) -> Option<u64> {
        match self {
            ChainVerdict::Valid { .. } => None,
            ChainVerdict::Broken { seq_no, .. } => Some(*seq_no),
        }
    }
}

/// Ordered, self-signed TRUSTEE NYMs that seed a ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisFile {
    pub transactions: Vec<LedgerTransaction>,
}

impl GenesisFile {
    /// Build a genesis of self-signed trustee NYMs.
    pub fn create(trustees: &[(&KeyPair, Option<&str>)], timestamp: i64) -> Self {
        let mut transactions: Vec<LedgerTransaction> = Vec::with_capacity(trustees.len());
        for (i, (keypair, alias)) in trustees.iter().enumerate() {
            let dest = Did::from_verkey(&keypair.verkey());
            let payload = TxnPayload::Nym(NymPayload {
                dest: dest.clone(),
                verkey: keypair.verkey(),
                alias: alias.map(str::to_owned),
                role: Role::Trustee,
            });
            let signature = keypair.sign(&payload.signing_bytes());
            let prev = transactions.last().map(|t| t.txn_hash).unwrap_or(Digest::ZERO);
            transactions.push(LedgerTransaction::new(i as u64 + 1, payload, dest, signature, timestamp, prev));
        }
        GenesisFile { transactions }
    }

    pub fn read(path: &Path) -> Result<Self, RegistryError> {
        let bytes = std::fs::read(path)?;
        Ok(GenesisFile { transactions: parse_lines(&bytes)? })
    }

    pub fn write(&self, path: &Path) -> Result<(), RegistryError> {
        let mut out = String::new();
        for txn in &self.transactions {
            out.push_str(&txn.to_line());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn trustee_dids(&self) -> Vec<Did> {
        self.transactions.iter().filter_map(|t| t.as_nym().map(|n| n.dest.clone())).collect()
    }
}

fn parse_lines(bytes: &[u8]) -> Result<Vec<LedgerTransaction>, RegistryError> {
    let mut txns = Vec::new();
    for (i, line) in split_lines(bytes).into_iter().enumerate() {
        let txn = LedgerTransaction::from_line(line)
            .map_err(|e| RegistryError::Parse { line: i as u64 + 1, reason: e.to_string() })?;
        txns.push(txn);
    }
    Ok(txns)
}

/// Newline-terminated records; a trailing empty segment is not a record.
fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

/// Verify a persisted ledger byte-for-byte: every line must be the canonical
/// encoding of a transaction and the decoded chain must replay cleanly.
pub fn verify_ledger_bytes(bytes: &[u8]) -> ChainVerdict {
    let mut txns = Vec::new();
    for (i, line) in split_lines(bytes).into_iter().enumerate() {
        match LedgerTransaction::from_line(line) {
            Ok(txn) => txns.push(txn),
            Err(e) => return ChainVerdict::Broken { seq_no: i as u64 + 1, reason: e.to_string() },
        }
    }
    if bytes.last().is_some_and(|b| *b != b'\n') {
        return ChainVerdict::Broken { seq_no: txns.len() as u64, reason: "missing final newline".into() };
    }
    match LedgerState::replay(&txns, None) {
        Ok(state) => ChainVerdict::Valid { height: state.height() },
        Err((seq_no, e)) => ChainVerdict::Broken { seq_no, reason: e.to_string() },
    }
}

pub fn verify_ledger_file(path: &Path) -> Result<ChainVerdict, RegistryError> {
    Ok(verify_ledger_bytes(&std::fs::read(path)?))
}

/// Shared handle to the verifiable data registry.
#[derive(Debug)]
pub struct Registry {
    state: RwLock<LedgerState>,
    sink: Mutex<Option<BufWriter<File>>>,
    clock: SharedClock,
}

impl Registry {
    /// In-memory registry seeded from a genesis.
    pub fn from_genesis(genesis: GenesisFile, clock: SharedClock) -> Result<Self, RegistryError> {
        let state = Self::replay_genesis(&genesis)?;
        Ok(Registry { state: RwLock::new(state), sink: Mutex::new(None), clock })
    }

    fn replay_genesis(genesis: &GenesisFile) -> Result<LedgerState, RegistryError> {
        if genesis.transactions.is_empty() {
            return Err(RegistryError::EmptyGenesis);
        }
        LedgerState::replay(&genesis.transactions, Some(genesis.transactions.len() as u64)).map_err(|(seq_no, e)| {
            match e {
                RegistryError::NonTrusteeInGenesis | RegistryError::EmptyGenesis => e,
                other => RegistryError::BrokenChain { seq_no, reason: other.to_string() },
            }
        })
    }

    /// Read a genesis file and build an in-memory registry from it.
    pub fn load_genesis(path: &Path, clock: SharedClock) -> Result<Self, RegistryError> {
        Self::from_genesis(GenesisFile::read(path)?, clock)
    }

    /// Write `genesis` to `genesis_path` and start a ledger file at
    /// `ledger_path` containing the same transactions.
    pub fn init_files(genesis: &GenesisFile, genesis_path: &Path, ledger_path: &Path, force: bool) -> Result<(), RegistryError> {
        for p in [genesis_path, ledger_path] {
            if p.exists() && !force {
                return Err(RegistryError::AlreadyExists(p.to_path_buf()));
            }
        }
        Self::replay_genesis(genesis)?;
        genesis.write(genesis_path)?;
        genesis.write(ledger_path)?;
        Ok(())
    }

    /// Open a persisted ledger, replaying and verifying every transaction.
    /// New transactions are appended to the same file.
    pub fn open(ledger_path: &Path, clock: SharedClock) -> Result<Self, RegistryError> {
        let bytes = std::fs::read(ledger_path)?;
        let txns = parse_lines(&bytes)?;
        let state = LedgerState::replay(&txns, None)
            .map_err(|(seq_no, e)| RegistryError::BrokenChain { seq_no, reason: e.to_string() })?;
        let file = OpenOptions::new().append(true).open(ledger_path)?;
        Ok(Registry { state: RwLock::new(state), sink: Mutex::new(Some(BufWriter::new(file))), clock })
    }

    /// Start persisting this (in-memory) registry to `path`, writing the
    /// current log first.
    pub fn persist_to(&self, path: &Path) -> Result<(), RegistryError> {
        let state = self.state.write().expect("registry lock poisoned");
        let mut file = BufWriter::new(File::create(path)?);
        for txn in &state.txns {
            file.write_all(txn.to_line().as_bytes())?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        *self.sink.lock().expect("registry sink poisoned") = Some(file);
        Ok(())
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn height(&self) -> u64 {
        self.read().height()
    }

    pub fn genesis_height(&self) -> u64 {
        self.read().genesis_height
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, LedgerState> {
        self.state.read().expect("registry lock poisoned")
    }

    /// Append a signed submission. The registry assigns `seq_no`, the
    /// timestamp and the chain digests.
    pub fn append_transaction(
        &self,
        txn_type: TxnType,
        payload: TxnPayload,
        submitter_did: &Did,
        signature: Signature,
    ) -> Result<u64, RegistryError> {
        if payload.txn_type() != txn_type {
            return Err(RegistryError::InvalidPayload(format!(
                "txn_type {txn_type} does not match a {} payload",
                payload.txn_type()
            )));
        }
        let mut state = self.state.write().expect("registry lock poisoned");
        state.check_submission(&payload, submitter_did, &signature, Phase::Open)?;
        let txn = LedgerTransaction::new(
            state.height() + 1,
            payload,
            submitter_did.clone(),
            signature,
            self.clock.now(),
            state.tip(),
        );
        debug_assert!(state.check(&txn, Phase::Open).is_ok());
        if let Some(sink) = self.sink.lock().expect("registry sink poisoned").as_mut() {
            sink.write_all(txn.to_line().as_bytes())?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        let seq_no = txn.seq_no;
        state.apply(txn);
        Ok(seq_no)
    }

    /// Sign `payload` with `keypair` and append it.
    pub fn submit(&self, submitter: &Did, keypair: &KeyPair, payload: TxnPayload) -> Result<u64, RegistryError> {
        let signature = keypair.sign(&payload.signing_bytes());
        self.append_transaction(payload.txn_type(), payload, submitter, signature)
    }

    pub fn resolve_nym(&self, did: &Did) -> Result<NymRecord, RegistryError> {
        self.read().nym(did).cloned().ok_or_else(|| RegistryError::NotFound(did.to_string()))
    }

    pub fn lookup_alias(&self, alias: &str) -> Result<NymRecord, RegistryError> {
        self.read().alias(alias).cloned().ok_or_else(|| RegistryError::NotFound(format!("alias {alias:?}")))
    }

    pub fn nym_provenance(&self, did: &Did) -> Result<NymProvenance, RegistryError> {
        self.read().provenance(did).ok_or_else(|| RegistryError::NotFound(did.to_string()))
    }

    pub fn get_transaction(&self, seq_no: u64) -> Result<LedgerTransaction, RegistryError> {
        let state = self.read();
        state
            .txns
            .get((seq_no as usize).wrapping_sub(1))
            .cloned()
            .ok_or(RegistryError::OutOfRange(seq_no))
    }

    pub fn get_schema(&self, seq_no: u64) -> Result<SchemaPayload, RegistryError> {
        match self.get_transaction(seq_no)? {
            LedgerTransaction { payload: TxnPayload::Schema(s), .. } => Ok(s),
            other => Err(RegistryError::TypeMismatch { seq_no, expected: TxnType::Schema, actual: other.txn_type }),
        }
    }

    pub fn get_claim_def(&self, seq_no: u64) -> Result<ClaimDefPayload, RegistryError> {
        match self.get_transaction(seq_no)? {
            LedgerTransaction { payload: TxnPayload::ClaimDef(c), .. } => Ok(c),
            other => Err(RegistryError::TypeMismatch { seq_no, expected: TxnType::ClaimDef, actual: other.txn_type }),
        }
    }

    pub fn find_schema(&self, name: &str, version: &str) -> Option<u64> {
        self.read().schema_seq(name, version)
    }

    /// Sequence number of the claim definition for (schema, issuer, tag).
    pub fn find_claim_def(&self, schema_seq_no: u64, issuer: &Did, tag: &str) -> Option<u64> {
        let state = self.read();
        if !state.has_claim_def(schema_seq_no, issuer, tag) {
            return None;
        }
        state.txns.iter().find_map(|t| match &t.payload {
            TxnPayload::ClaimDef(d) if d.schema_seq_no == schema_seq_no && &d.issuer_did == issuer && d.tag == tag => {
                Some(t.seq_no)
            }
            _ => None,
        })
    }

    pub fn transactions(&self) -> Vec<LedgerTransaction> {
        self.read().txns.clone()
    }

    pub fn genesis(&self) -> GenesisFile {
        let state = self.read();
        GenesisFile { transactions: state.txns[..state.genesis_height as usize].to_vec() }
    }

    /// Replay the whole log from scratch and report the first broken entry.
    pub fn verify_chain(&self) -> ChainVerdict {
        let state = self.read();
        match LedgerState::replay(&state.txns, Some(state.genesis_height)) {
            Ok(s) => ChainVerdict::Valid { height: s.height() },
            Err((seq_no, e)) => ChainVerdict::Broken { seq_no, reason: e.to_string() },
        }
    }
}

#[cfg(test)]
mod tests;
