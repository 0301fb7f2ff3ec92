//! `init`: write a genesis of self-signed trustee NYMs and start a ledger
//! file holding the same transactions.

use std::path::{Path, PathBuf};

use didauth_core::registry::{verify_ledger_file, ChainVerdict, RegistryError};
use didauth_core::Registry;

use crate::config::Settings;
use crate::transcript::Transcript;
use crate::CliError;

pub const DEFAULT_GENESIS: &str = "didauth-genesis.jsonl";
pub const DEFAULT_LEDGER: &str = "didauth-ledger.jsonl";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitPaths {
    pub genesis: PathBuf,
    pub ledger: PathBuf,
}

impl InitPaths {
    pub fn from_settings(settings: &Settings) -> Self {
        let cfg = &settings.config;
        InitPaths {
            genesis: cfg.genesis_path.clone().unwrap_or_else(|| DEFAULT_GENESIS.into()),
            ledger: cfg.ledger_path.clone().unwrap_or_else(|| DEFAULT_LEDGER.into()),
        }
    }
}

fn display(p: &Path) -> String {
    p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

pub fn run(settings: &Settings, paths: &InitPaths, force: bool, t: &mut Transcript) -> Result<u64, CliError> {
    let trustees = settings.trustees();
    let genesis = settings.genesis(&trustees);
    match Registry::init_files(&genesis, &paths.genesis, &paths.ledger, force) {
        Ok(()) => {}
        Err(RegistryError::AlreadyExists(p)) => {
            return Err(t.fail("init", format!("{} exists; pass --force to overwrite", p.display())))
        }
        Err(e) => return Err(t.fail("init", e)),
    }
    for (i, trustee) in trustees.iter().enumerate() {
        t.line(format!("TRUSTEE {i} {}", trustee.did));
    }
    t.ok(
        "init",
        format!(
            "trustees={} genesis={} ledger={}",
            trustees.len(),
            display(&paths.genesis),
            display(&paths.ledger)
        ),
    );
    match verify_ledger_file(&paths.ledger) {
        Ok(ChainVerdict::Valid { height }) => {
            t.ok("verify-chain", format!("height={height}"));
            Ok(height)
        }
        Ok(broken) => Err(t.fail("verify-chain", format!("{broken:?}"))),
        Err(e) => Err(t.fail("verify-chain", e)),
    }
}
