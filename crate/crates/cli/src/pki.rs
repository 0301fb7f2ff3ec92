//! `scenario pki`: CA registration, domain binding, certificate issuance,
//! verification, revocation by NYM update and re-issuance.

use didauth_core::pki::{
    issue_certificate_vc, register_ca, register_domain, revoke_domain_key, rotate_domain_key, setup_ca_claim_def,
    verify_certificate_chain, CertificateFields, ChainCheck,
};
use didauth_core::registry::ChainVerdict;

use crate::config::Settings;
use crate::transcript::Transcript;
use crate::CliError;

pub const CA_ALIAS: &str = "demo-ca";
pub const DOMAIN: &str = "wineshop.example";
pub const VALIDITY_DAYS: i64 = 90;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkiReport {
    pub issued: ChainCheck,
    pub revoked: ChainCheck,
    pub reissued: ChainCheck,
    pub old_after_reissue: ChainCheck,
}

fn describe(c: &ChainCheck) -> String {
    match &c.diagnostic {
        Some(d) => format!("verify={} diagnostic=\"{d}\"", c.valid),
        None => format!("verify={}", c.valid),
    }
}

fn expect(t: &mut Transcript, step: &str, check: &ChainCheck, valid: bool, diagnostic: Option<&str>) -> Result<(), CliError> {
    if check.valid == valid && (diagnostic.is_none() || check.diagnostic.as_deref() == diagnostic) {
        t.ok(step, describe(check));
        Ok(())
    } else {
        Err(t.fail(step, describe(check)))
    }
}

pub fn run(settings: &Settings, t: &mut Transcript) -> Result<PkiReport, CliError> {
    let ledger = settings.open_ledger().map_err(|e| t.fail_keep("ledger", e))?;
    let registry = &ledger.registry;
    t.ok("ledger", format!("height={} trustees={}", registry.height(), ledger.trustees.len()));

    let ca = settings.seed.identity("certificate-authority");
    let r = register_ca(registry, &ledger.trustees[0], &ca.did, ca.verkey(), CA_ALIAS);
    t.check("ca-registration", r, |seq| format!("did={} role=STEWARD alias={CA_ALIAS} seq={seq}", ca.did))?;
    let claim_def = t.check("ca-claim-def", setup_ca_claim_def(registry, &ca), |seq| format!("seq={seq}"))?;

    let key = didauth_core::KeyPair::from_seed(settings.seed.derive("domain-key-1"));
    let (domain_did, _) = t.check("domain-registration", register_domain(registry, &ca, DOMAIN, key.verkey()), |(d, s)| {
        format!("domain={DOMAIN} did={d} seq={s}")
    })?;

    let now = registry.clock().now();
    let fields = CertificateFields::leaf(CA_ALIAS, DOMAIN, key.verkey(), 1, now, VALIDITY_DAYS);
    let cert = t.check("certificate-issued", issue_certificate_vc(registry, &ca, claim_def, &domain_did, &fields), |_| {
        format!("serial={} days={VALIDITY_DAYS}", fields.serial_number)
    })?;

    let issued = verify_certificate_chain(DOMAIN, &cert, registry, now);
    expect(t, "verify", &issued, true, None)?;

    t.check("revoke", revoke_domain_key(registry, &ca, &domain_did), |seq| format!("nym-update seq={seq}"))?;
    let revoked = verify_certificate_chain(DOMAIN, &cert, registry, now);
    expect(t, "verify-revoked", &revoked, false, Some("alias key mismatch"))?;

    let fresh = didauth_core::KeyPair::from_seed(settings.seed.derive("domain-key-2"));
    t.check("rotate", rotate_domain_key(registry, &ca.did, &ca.keypair, &domain_did, fresh.verkey()), |seq| {
        format!("seq={seq}")
    })?;
    let fields2 = CertificateFields::leaf(CA_ALIAS, DOMAIN, fresh.verkey(), 2, now, VALIDITY_DAYS);
    let cert2 = t.check("reissue", issue_certificate_vc(registry, &ca, claim_def, &domain_did, &fields2), |_| {
        format!("serial={}", fields2.serial_number)
    })?;
    let reissued = verify_certificate_chain(DOMAIN, &cert2, registry, now);
    expect(t, "verify-reissued", &reissued, true, None)?;
    let old_after_reissue = verify_certificate_chain(DOMAIN, &cert, registry, now);
    expect(t, "verify-old", &old_after_reissue, false, None)?;

    match registry.verify_chain() {
        ChainVerdict::Valid { height } => t.ok("verify-chain", format!("height={height}")),
        broken => return Err(t.fail("verify-chain", format!("{broken:?}"))),
    }
    Ok(PkiReport { issued, revoked, reissued, old_after_reissue })
}
