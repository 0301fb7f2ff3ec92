use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use didauth_core::registry::{GenesisFile, Role};
use didauth_core::{Did, FixedClock, Identity, Registry, SharedClock, SystemClock};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_TRUSTEES: usize = 4;

/// Loopback ports for the in-process services; 0 picks a free port.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ports {
    pub issuer_agent: u16,
    pub holder_agent: u16,
    pub provider_agent: u16,
    pub provider: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub client_id: String,
    pub client_secret: Option<String>,
    pub redirect_uri: String,
    pub predicates: Vec<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            client_id: "wineshop".into(),
            client_secret: Some("wineshop-secret".into()),
            redirect_uri: "https://wineshop.example/callback".into(),
            predicates: vec!["over_18".into()],
        }
    }
}

/// Contents of the `--config` TOML file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Append-only ledger file. Opened if it exists, created otherwise.
    pub ledger_path: Option<PathBuf>,
    pub genesis_path: Option<PathBuf>,
    /// Holder wallet file.
    pub wallet_path: Option<PathBuf>,
    pub ports: Ports,
    pub client: ClientConfig,
    pub trustees: Option<usize>,
    pub fixed_clock: Option<i64>,
    /// Hex master seed.
    pub seed: Option<String>,
    /// Issuer DIDs the provider accepts besides the scenario's own issuer.
    pub trusted_issuers: Vec<Did>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.ports;
        let mut seen = BTreeSet::new();
        for port in [p.issuer_agent, p.holder_agent, p.provider_agent, p.provider] {
            if port != 0 && !seen.insert(port) {
                return Err(CliError::Config(format!("port {port} is used twice")));
            }
        }
        for path in [&self.ledger_path, &self.genesis_path, &self.wallet_path].into_iter().flatten() {
            check_writable(path)?;
        }
        if self.trustees == Some(0) {
            return Err(CliError::Config("at least one trustee is required".into()));
        }
        if self.client.client_id.is_empty() || self.client.redirect_uri.is_empty() {
            return Err(CliError::Config("client_id and redirect_uri must be set".into()));
        }
        if let Some(s) = &self.seed {
            Seed::from_hex(s).map_err(CliError::Config)?;
        }
        Ok(())
    }
}

fn check_writable(path: &Path) -> Result<(), CliError> {
    let target = if path.exists() {
        path.to_path_buf()
    } else {
        match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    };
    let meta = fs::metadata(&target).map_err(|e| CliError::Config(format!("{}: {e}", target.display())))?;
    if meta.permissions().readonly() {
        return Err(CliError::Config(format!("{} is not writable", target.display())));
    }
    Ok(())
}

/// Master seed from which every scenario key is derived.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed(Vec<u8>);

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Seed(..)")
    }
}

impl Seed {
    pub fn from_hex(s: &str) -> Result<Self, String> {
        let bytes = hex::decode(s.trim()).map_err(|e| format!("seed must be hex: {e}"))?;
        if bytes.is_empty() {
            return Err("seed must not be empty".into());
        }
        Ok(Seed(bytes))
    }

    pub fn random() -> Self {
        let mut b = vec![0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut b);
        Seed(b)
    }

    pub fn derive(&self, label: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"didauth-seed\0");
        h.update((self.0.len() as u64).to_be_bytes());
        h.update(&self.0);
        h.update(label.as_bytes());
        h.finalize().into()
    }

    pub fn identity(&self, label: &str) -> Identity {
        Identity::from_seed(self.derive(label))
    }
}

/// Config plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: ScenarioConfig,
    pub seed: Seed,
    pub clock: SharedClock,
    pub deterministic: bool,
}

pub struct Ledger {
    pub registry: Arc<Registry>,
    pub trustees: Vec<Identity>,
}

impl Settings {
    pub fn new(config: ScenarioConfig, seed: Option<Seed>, fixed_clock: Option<i64>) -> Result<Self, CliError> {
        config.validate()?;
        let seed = match (seed, &config.seed) {
            (Some(s), _) => Some(s),
            (None, Some(hex)) => Some(Seed::from_hex(hex).map_err(CliError::Config)?),
            (None, None) => None,
        };
        let fixed = fixed_clock.or(config.fixed_clock);
        let clock: SharedClock = match fixed {
            Some(t) => Arc::new(FixedClock::new(t)),
            None => SystemClock::shared(),
        };
        Ok(Settings {
            deterministic: seed.is_some() && fixed.is_some(),
            seed: seed.unwrap_or_else(Seed::random),
            clock,
            config,
        })
    }

    pub fn trustee_count(&self) -> usize {
        self.config.trustees.unwrap_or(DEFAULT_TRUSTEES)
    }

    pub fn trustees(&self) -> Vec<Identity> {
        (0..self.trustee_count()).map(|i| self.seed.identity(&format!("trustee-{i}"))).collect()
    }

    pub fn genesis(&self, trustees: &[Identity]) -> GenesisFile {
        let aliases: Vec<String> = (0..trustees.len()).map(|i| format!("trustee-{i}")).collect();
        let entries: Vec<_> = trustees.iter().zip(&aliases).map(|(t, a)| (&t.keypair, Some(a.as_str()))).collect();
        GenesisFile::create(&entries, self.clock.now())
    }

    /// Opens the configured ledger file, or starts a fresh ledger from the
    /// seed's trustees (persisted if a ledger path is configured).
    pub fn open_ledger(&self) -> Result<Ledger, CliError> {
        let trustees = self.trustees();
        let cfg = &self.config;
        let registry = match &cfg.ledger_path {
            Some(path) if path.exists() => Registry::open(path, self.clock.clone())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            _ => {
                let genesis = match &cfg.genesis_path {
                    Some(p) if p.exists() => {
                        GenesisFile::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                    }
                    _ => self.genesis(&trustees),
                };
                let registry = Registry::from_genesis(genesis, self.clock.clone())
                    .map_err(|e| CliError::Config(format!("genesis: {e}")))?;
                if let Some(path) = &cfg.ledger_path {
                    registry.persist_to(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                }
                registry
            }
        };
        match registry.resolve_nym(&trustees[0].did) {
            Ok(rec) if rec.role == Role::Trustee => {}
            _ => return Err(CliError::Config("the ledger's trustees were not derived from this seed".into())),
        }
        Ok(Ledger { registry: Arc::new(registry), trustees })
    }
}
