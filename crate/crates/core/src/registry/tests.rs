use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::clock::FixedClock;
use crate::credentials::OIDC_STANDARD_CLAIMS;
use crate::identity::generate_did;

const T0: i64 = 1_600_000_000;

fn trustee(seed: u8) -> (Did, KeyPair) {
    generate_did(Some(&[seed; 32])).unwrap()
}

fn fresh_ledger() -> (Registry, Did, KeyPair) {
    let (did, kp) = trustee(1);
    let genesis = GenesisFile::create(&[(&kp, Some("root"))], T0);
    (Registry::from_genesis(genesis, Arc::new(FixedClock::new(T0))).unwrap(), did, kp)
}

fn nym(dest: &Did, kp: &KeyPair, alias: Option<&str>, role: Role) -> TxnPayload {
    TxnPayload::Nym(NymPayload { dest: dest.clone(), verkey: kp.verkey(), alias: alias.map(Into::into), role })
}

/// Write a fresh DID with `role` via `submitter` and return it.
fn add_member(reg: &Registry, submitter: &Did, skp: &KeyPair, role: Role, alias: Option<&str>) -> (Did, KeyPair) {
    let (did, kp) = generate_did(None).unwrap();
    reg.submit(submitter, skp, nym(&did, &kp, alias, role)).unwrap();
    (did, kp)
}

fn ten_txn_ledger() -> (Registry, Did, KeyPair) {
    let (reg, root, rkp) = fresh_ledger();
    let (steward, skp) = add_member(&reg, &root, &rkp, Role::Steward, Some("steward"));
    let (endorser, ekp) = add_member(&reg, &steward, &skp, Role::Endorser, None);
    let schema = reg
        .submit(
            &endorser,
            &ekp,
            TxnPayload::Schema(SchemaPayload { name: "s".into(), version: "1.0".into(), attr_names: vec!["a".into(), "b".into()] }),
        )
        .unwrap();
    reg.submit(
        &endorser,
        &ekp,
        TxnPayload::ClaimDef(ClaimDefPayload { schema_seq_no: schema, issuer_did: endorser.clone(), issuer_verkey: ekp.verkey(), tag: "t".into() }),
    )
    .unwrap();
    while reg.height() < 10 {
        add_member(&reg, &endorser, &ekp, Role::None, None);
    }
    (reg, root, rkp)
}

#[test]
fn minimal_genesis_has_height_one() {
    let (reg, root, _) = fresh_ledger();
    assert_eq!(reg.height(), 1);
    assert_eq!(reg.genesis_height(), 1);
    assert_eq!(reg.resolve_nym(&root).unwrap().role, Role::Trustee);
    assert!(reg.verify_chain().is_valid());
}

#[test]
fn four_trustee_genesis_from_file() {
    let keys: Vec<(Did, KeyPair)> = (10..14).map(trustee).collect();
    let entries: Vec<(&KeyPair, Option<&str>)> = keys.iter().map(|(_, k)| (k, None)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genesis.jsonl");
    GenesisFile::create(&entries, T0).write(&path).unwrap();

    let reg = Registry::load_genesis(&path, Arc::new(FixedClock::new(T0))).unwrap();
    assert_eq!(reg.height(), 4);
    for (did, kp) in &keys {
        let rec = reg.resolve_nym(did).unwrap();
        assert_eq!(rec.role, Role::Trustee);
        assert_eq!(rec.verkey, kp.verkey());
    }
    assert_eq!(reg.verify_chain(), ChainVerdict::Valid { height: 4 });
}

#[test]
fn endorser_in_genesis_is_rejected() {
    let (did, kp) = trustee(2);
    let payload = nym(&did, &kp, None, Role::Endorser);
    let sig = kp.sign(&payload.signing_bytes());
    let genesis = GenesisFile { transactions: vec![LedgerTransaction::new(1, payload, did, sig, T0, Digest::ZERO)] };
    let err = Registry::from_genesis(genesis, Arc::new(FixedClock::new(T0))).unwrap_err();
    assert!(matches!(err, RegistryError::NonTrusteeInGenesis));
    assert_eq!(err.to_string(), "non-trustee in genesis");
}

#[test]
fn empty_and_unparseable_genesis() {
    let clock: SharedClock = Arc::new(FixedClock::new(T0));
    assert!(matches!(
        Registry::from_genesis(GenesisFile { transactions: vec![] }, clock.clone()),
        Err(RegistryError::EmptyGenesis)
    ));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    std::fs::write(&path, "not json\n").unwrap();
    assert!(matches!(Registry::load_genesis(&path, clock), Err(RegistryError::Parse { line: 1, .. })));
}

#[test]
fn genesis_with_broken_link_is_rejected() {
    let (_, a) = trustee(20);
    let (_, b) = trustee(21);
    let mut genesis = GenesisFile::create(&[(&a, None), (&b, None)], T0);
    genesis.transactions[1].prev_hash = Digest::ZERO;
    genesis.transactions[1].txn_hash = genesis.transactions[1].compute_hash();
    let err = Registry::from_genesis(genesis, Arc::new(FixedClock::new(T0))).unwrap_err();
    assert!(matches!(err, RegistryError::BrokenChain { seq_no: 2, .. }), "{err}");
}

#[test]
fn trustee_grants_steward() {
    let (reg, root, rkp) = fresh_ledger();
    let (did, kp) = generate_did(None).unwrap();
    let h = reg.height();
    let seq = reg.submit(&root, &rkp, nym(&did, &kp, None, Role::Steward)).unwrap();
    assert_eq!(seq, h + 1);
    let txn = reg.get_transaction(seq).unwrap();
    assert_eq!(txn.timestamp, T0);
    assert_eq!(txn.prev_hash, reg.get_transaction(h).unwrap().txn_hash);
}

#[test]
fn role_none_cannot_write_schema() {
    let (reg, root, rkp) = fresh_ledger();
    let (user, ukp) = add_member(&reg, &root, &rkp, Role::None, None);
    let err = reg
        .submit(&user, &ukp, TxnPayload::Schema(SchemaPayload { name: "x".into(), version: "1".into(), attr_names: vec!["a".into()] }))
        .unwrap_err();
    assert!(matches!(err, RegistryError::InsufficientRole { .. }));
    assert!(err.to_string().starts_with("insufficient role"));
}

#[test]
fn endorser_writes_oidc_schema() {
    let (reg, root, rkp) = fresh_ledger();
    let (endorser, ekp) = add_member(&reg, &root, &rkp, Role::Endorser, None);
    let attrs: Vec<String> = OIDC_STANDARD_CLAIMS.iter().map(|s| s.to_string()).collect();
    let seq = reg
        .submit(&endorser, &ekp, TxnPayload::Schema(SchemaPayload { name: "oidc".into(), version: "1.0".into(), attr_names: attrs.clone() }))
        .unwrap();
    let schema = reg.get_schema(seq).unwrap();
    assert_eq!(schema.attr_names.len(), 19);
    assert_eq!(schema.attr_names, attrs);
}

#[test]
fn submission_errors() {
    let (reg, root, rkp) = fresh_ledger();
    let (stranger, skp) = generate_did(None).unwrap();
    assert!(matches!(
        reg.submit(&stranger, &skp, nym(&stranger, &skp, None, Role::None)),
        Err(RegistryError::UnknownSubmitter(_))
    ));

    let (did, kp) = generate_did(None).unwrap();
    let payload = nym(&did, &kp, None, Role::None);
    let forged = kp.sign(&payload.signing_bytes());
    assert!(matches!(
        reg.append_transaction(TxnType::Nym, payload.clone(), &root, forged),
        Err(RegistryError::BadSignature)
    ));
    let good = rkp.sign(&payload.signing_bytes());
    assert!(matches!(
        reg.append_transaction(TxnType::Schema, payload, &root, good),
        Err(RegistryError::InvalidPayload(_))
    ));

    let (other, okp) = generate_did(None).unwrap();
    assert!(matches!(
        reg.submit(&root, &rkp, TxnPayload::Nym(NymPayload { dest: other, verkey: kp.verkey(), alias: None, role: Role::None })),
        Err(RegistryError::DestMismatch)
    ));
    let _ = okp;

    let schema = TxnPayload::Schema(SchemaPayload { name: "s".into(), version: "1.0".into(), attr_names: vec!["a".into()] });
    reg.submit(&root, &rkp, schema.clone()).unwrap();
    assert!(matches!(reg.submit(&root, &rkp, schema), Err(RegistryError::DuplicateSchema { .. })));

    for (version, attrs) in [("1.x", vec!["a"]), ("2", vec![]), ("3", vec!["a", "a"])] {
        let bad = TxnPayload::Schema(SchemaPayload {
            name: "bad".into(),
            version: version.into(),
            attr_names: attrs.into_iter().map(Into::into).collect(),
        });
        assert!(matches!(reg.submit(&root, &rkp, bad), Err(RegistryError::InvalidPayload(_))));
    }

    let too_long = "x".repeat(MAX_ALIAS_CHARS + 1);
    let (d2, k2) = generate_did(None).unwrap();
    assert!(matches!(
        reg.submit(&root, &rkp, nym(&d2, &k2, Some(&too_long), Role::None)),
        Err(RegistryError::InvalidPayload(_))
    ));
}

#[test]
fn resolve_latest_wins_and_unknown() {
    let (reg, root, rkp) = fresh_ledger();
    let (did, kp1) = add_member(&reg, &root, &rkp, Role::None, None);
    assert_eq!(reg.resolve_nym(&did).unwrap().verkey, kp1.verkey());

    let kp2 = KeyPair::generate();
    let seq = reg.submit(&did, &kp1, nym(&did, &kp2, None, Role::None)).unwrap();
    let rec = reg.resolve_nym(&did).unwrap();
    assert_eq!(rec.verkey, kp2.verkey());
    assert_eq!(rec.seq_no, seq);

    let (unknown, _) = generate_did(None).unwrap();
    assert!(matches!(reg.resolve_nym(&unknown), Err(RegistryError::NotFound(_))));
}

#[test]
fn rotation_rules() {
    let (reg, root, rkp) = fresh_ledger();
    let (endorser, ekp) = add_member(&reg, &root, &rkp, Role::Endorser, None);
    let (user, ukp) = add_member(&reg, &endorser, &ekp, Role::None, None);
    let (other, okp) = add_member(&reg, &root, &rkp, Role::Endorser, None);

    // Unrelated endorser may not rotate someone else's key.
    let k = KeyPair::generate();
    assert!(matches!(
        reg.submit(&other, &okp, nym(&user, &k, None, Role::None)),
        Err(RegistryError::NotAuthorized(_))
    ));
    // The creator may.
    reg.submit(&endorser, &ekp, nym(&user, &k, None, Role::None)).unwrap();
    // A retired key may not come back.
    assert!(matches!(
        reg.submit(&root, &rkp, nym(&user, &ukp, None, Role::None)),
        Err(RegistryError::VerkeyReuse)
    ));
    // Nobody promotes themselves.
    assert!(matches!(
        reg.submit(&user, &k, nym(&user, &k, None, Role::Endorser)),
        Err(RegistryError::InsufficientRole { .. })
    ));
    // An endorser cannot demote a trustee-created steward.
    let (steward, skp) = add_member(&reg, &root, &rkp, Role::Steward, None);
    assert!(reg.submit(&endorser, &ekp, nym(&steward, &skp, None, Role::None)).is_err());
    reg.submit(&root, &rkp, nym(&steward, &skp, None, Role::None)).unwrap();
    assert_eq!(reg.resolve_nym(&steward).unwrap().role, Role::None);
}

#[test]
fn alias_lookup_and_repoint() {
    let (reg, root, rkp) = fresh_ledger();
    let (did, kp) = add_member(&reg, &root, &rkp, Role::None, Some("example.org"));
    assert_eq!(reg.lookup_alias("example.org").unwrap().verkey, kp.verkey());
    assert!(matches!(reg.lookup_alias("never.example"), Err(RegistryError::NotFound(_))));

    let kp2 = KeyPair::generate();
    reg.submit(&root, &rkp, nym(&did, &kp2, Some("example.org"), Role::None)).unwrap();
    assert_eq!(reg.lookup_alias("example.org").unwrap().verkey, kp2.verkey());

    let (other, okp) = generate_did(None).unwrap();
    assert!(matches!(
        reg.submit(&root, &rkp, nym(&other, &okp, Some("example.org"), Role::None)),
        Err(RegistryError::DuplicateAlias(_))
    ));
}

#[test]
fn schema_and_claim_def_reads() {
    let (reg, root, rkp) = fresh_ledger();
    assert!(matches!(reg.get_schema(1), Err(RegistryError::TypeMismatch { .. })));
    assert!(matches!(reg.get_schema(99), Err(RegistryError::OutOfRange(99))));
    assert!(matches!(reg.get_schema(0), Err(RegistryError::OutOfRange(0))));

    let s = reg
        .submit(&root, &rkp, TxnPayload::Schema(SchemaPayload { name: "x".into(), version: "1.2".into(), attr_names: vec!["a".into()] }))
        .unwrap();
    assert_eq!(reg.get_schema(s).unwrap().name, "x");
    let def = TxnPayload::ClaimDef(ClaimDefPayload { schema_seq_no: s, issuer_did: root.clone(), issuer_verkey: rkp.verkey(), tag: "default".into() });
    let c = reg.submit(&root, &rkp, def.clone()).unwrap();
    assert_eq!(reg.get_claim_def(c).unwrap().schema_seq_no, s);
    assert_eq!(reg.find_claim_def(s, &root, "default"), Some(c));
    assert!(matches!(reg.submit(&root, &rkp, def), Err(RegistryError::DuplicateClaimDef)));

    let dangling = TxnPayload::ClaimDef(ClaimDefPayload { schema_seq_no: 1, issuer_did: root.clone(), issuer_verkey: rkp.verkey(), tag: "t".into() });
    assert!(matches!(reg.submit(&root, &rkp, dangling), Err(RegistryError::UnknownSchema(1))));
}

#[test]
fn fresh_ten_txn_ledger_verifies() {
    let (reg, _, _) = ten_txn_ledger();
    assert_eq!(reg.verify_chain(), ChainVerdict::Valid { height: 10 });
}

#[test]
fn persisted_mutation_in_txn_five_is_located() {
    let (reg, _, _) = ten_txn_ledger();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    reg.persist_to(&path).unwrap();
    assert!(verify_ledger_file(&path).unwrap().is_valid());

    let mut bytes = std::fs::read(&path).unwrap();
    let line_start: usize = bytes.split(|b| *b == b'\n').take(4).map(|l| l.len() + 1).sum();
    let payload_pos = line_start + bytes[line_start..].windows(9).position(|w| w == b"\"payload\"").unwrap() + 14;
    bytes[payload_pos] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();

    let verdict = verify_ledger_file(&path).unwrap();
    assert_eq!(verdict.failing_seq_no(), Some(5), "{verdict:?}");
    assert!(matches!(Registry::open(&path, crate::clock::SystemClock::shared()), Err(RegistryError::BrokenChain { seq_no: 5, .. }) | Err(RegistryError::Parse { line: 5, .. })));
}

#[test]
fn every_single_byte_mutation_is_detected() {
    let (reg, root, rkp) = fresh_ledger();
    add_member(&reg, &root, &rkp, Role::Endorser, Some("e"));
    add_member(&reg, &root, &rkp, Role::None, None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    reg.persist_to(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let mut line_of = Vec::with_capacity(bytes.len());
    let mut line = 1u64;
    for b in &bytes {
        line_of.push(line);
        if *b == b'\n' {
            line += 1;
        }
    }
    for pos in 0..bytes.len() {
        for flip in [0x01u8, 0x20, 0x80] {
            let mut m = bytes.clone();
            m[pos] ^= flip;
            let verdict = verify_ledger_bytes(&m);
            assert_eq!(verdict.failing_seq_no(), Some(line_of[pos]), "pos {pos} flip {flip:#x}: {verdict:?}");
        }
    }
}

#[test]
fn empty_post_genesis_ledger_verifies() {
    let (reg, _, _) = fresh_ledger();
    assert_eq!(reg.verify_chain(), ChainVerdict::Valid { height: 1 });
}

#[test]
fn reopen_reproduces_hashes_and_keeps_appending() {
    let (reg, root, rkp) = ten_txn_ledger();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    reg.persist_to(&path).unwrap();
    add_member(&reg, &root, &rkp, Role::None, None);

    let reopened = Registry::open(&path, Arc::new(FixedClock::new(T0))).unwrap();
    let a: Vec<Digest> = reg.transactions().iter().map(|t| t.txn_hash).collect();
    let b: Vec<Digest> = reopened.transactions().iter().map(|t| t.txn_hash).collect();
    assert_eq!(a, b);
    assert_eq!(reopened.genesis_height(), 1);

    add_member(&reopened, &root, &rkp, Role::None, None);
    assert_eq!(verify_ledger_file(&path).unwrap(), ChainVerdict::Valid { height: 12 });
}

#[test]
fn init_refuses_to_overwrite() {
    let (_, kp) = trustee(5);
    let genesis = GenesisFile::create(&[(&kp, None)], T0);
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.jsonl");
    let l = dir.path().join("l.jsonl");
    Registry::init_files(&genesis, &g, &l, false).unwrap();
    assert!(matches!(Registry::init_files(&genesis, &g, &l, false), Err(RegistryError::AlreadyExists(_))));
    Registry::init_files(&genesis, &g, &l, true).unwrap();
}

#[test]
fn readers_see_consistent_prefix_during_writes() {
    let (reg, root, rkp) = fresh_ledger();
    let reg = Arc::new(reg);
    let writer = {
        let reg = reg.clone();
        std::thread::spawn(move || {
            for _ in 0..200 {
                add_member(&reg, &root, &rkp, Role::None, None);
            }
        })
    };
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let reg = reg.clone();
            std::thread::spawn(move || {
                for _ in 0..50 {
                    let txns = reg.transactions();
                    for w in txns.windows(2) {
                        assert_eq!(w[1].prev_hash, w[0].txn_hash);
                        assert_eq!(w[1].seq_no, w[0].seq_no + 1);
                    }
                }
            })
        })
        .collect();
    writer.join().unwrap();
    for r in readers {
        r.join().unwrap();
    }
    assert_eq!(reg.height(), 201);
}

fn role_strategy() -> impl Strategy<Value = Role> {
    prop::sample::select(Role::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nym_acl_matches_role_lattice(submitter_role in role_strategy(), granted in role_strategy()) {
        let (reg, root, rkp) = fresh_ledger();
        let (sub, skp) = if submitter_role == Role::Trustee {
            (root, rkp)
        } else {
            add_member(&reg, &root, &rkp, submitter_role, None)
        };
        let (did, kp) = generate_did(None).unwrap();
        let accepted = reg.submit(&sub, &skp, nym(&did, &kp, None, granted)).is_ok();
        prop_assert_eq!(accepted, submitter_role >= granted && submitter_role >= Role::Endorser);
    }

    #[test]
    fn alias_stays_unique(ops in prop::collection::vec((0usize..4, 0usize..3, any::<bool>()), 1..30)) {
        let (reg, root, rkp) = fresh_ledger();
        let aliases = ["a.example", "b.example", "c.example"];
        let members: Vec<(Did, KeyPair)> = (0..4).map(|_| add_member(&reg, &root, &rkp, Role::None, None)).collect();
        for (who, alias, rotate) in ops {
            let (did, kp) = &members[who];
            let key = if rotate { KeyPair::generate() } else { kp.clone() };
            let verkey = if rotate { key.verkey() } else { reg.resolve_nym(did).unwrap().verkey };
            let _ = reg.submit(&root, &rkp, TxnPayload::Nym(NymPayload {
                dest: did.clone(), verkey, alias: Some(aliases[alias].into()), role: Role::None,
            }));
            for a in aliases {
                let holders = members.iter().filter(|(d, _)| reg.resolve_nym(d).unwrap().alias.as_deref() == Some(a)).count();
                prop_assert!(holders <= 1);
            }
        }
        prop_assert!(reg.verify_chain().is_valid());
    }
}
