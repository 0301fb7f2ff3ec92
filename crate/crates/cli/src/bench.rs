//! `bench <n>`: sustained local NYM append rate, then a full chain check.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use didauth_core::registry::{verify_ledger_file, ChainVerdict, NymPayload, Role, TxnPayload};

use crate::config::Settings;
use crate::transcript::Transcript;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub appended: u64,
    pub append_time: Duration,
    pub rate_tps: f64,
    pub verdict: ChainVerdict,
    pub verify_time: Duration,
    pub ledger_path: Option<PathBuf>,
}

pub fn run(settings: &Settings, n: u64, t: &mut Transcript) -> Result<BenchReport, CliError> {
    if n == 0 {
        return Err(CliError::Usage("bench needs n >= 1".into()));
    }
    let ledger = settings.open_ledger().map_err(|e| t.fail_keep("ledger", e))?;
    let registry = &ledger.registry;
    let trustee = &ledger.trustees[0];
    let start_height = registry.height();
    t.ok("ledger", format!("height={start_height}"));

    // Keys are derived up front so the timed loop measures appends only.
    let subjects: Vec<_> = (0..n).map(|i| settings.seed.identity(&format!("bench-{start_height}-{i}"))).collect();
    let started = Instant::now();
    for (i, s) in subjects.iter().enumerate() {
        let payload = TxnPayload::Nym(NymPayload { dest: s.did.clone(), verkey: s.verkey(), alias: None, role: Role::None });
        if let Err(e) = registry.submit(&trustee.did, &trustee.keypair, payload) {
            return Err(t.fail("bench", format!("append {} of {n}: {e}", i + 1)));
        }
    }
    let append_time = started.elapsed();
    let rate_tps = n as f64 / append_time.as_secs_f64().max(f64::MIN_POSITIVE);
    t.ok("bench", format!("appended={n} seconds={:.3} rate={rate_tps:.1}tps", append_time.as_secs_f64()));

    let started = Instant::now();
    let verdict = registry.verify_chain();
    let verify_time = started.elapsed();
    match &verdict {
        ChainVerdict::Valid { height } => {
            t.ok("verify-chain", format!("height={height} seconds={:.3}", verify_time.as_secs_f64()))
        }
        broken => return Err(t.fail("verify-chain", format!("{broken:?}"))),
    }

    let ledger_path = settings.config.ledger_path.clone();
    if let Some(path) = &ledger_path {
        match verify_ledger_file(path) {
            Ok(ChainVerdict::Valid { height }) => t.ok("verify-file", format!("height={height}")),
            Ok(broken) => return Err(t.fail("verify-file", format!("{broken:?}"))),
            Err(e) => return Err(t.fail("verify-file", e)),
        }
    }
    Ok(BenchReport { appended: n, append_time, rate_tps, verdict, verify_time, ledger_path })
}
