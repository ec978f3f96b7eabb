//! Composition oracles: each derivation recomputed step by step from the
//! hand-written HMAC and raw group arithmetic.

mod common;

use std::collections::HashSet;

use common::hmac_oracle;
use locathe::crypto::*;
use locathe::key_schedule::*;
use locathe::time::Timestamp;
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

struct Sess {
    shared: GroupPoint,
    n_i: [u8; 32],
    n_r: [u8; 32],
    ids: SessionIds,
}

fn session(rng: &mut ChaCha20Rng) -> Sess {
    let (ki, _) = ecdhe_keypair(rng);
    let (_, ke_r) = ecdhe_keypair(rng);
    Sess {
        shared: dh(&ki, &ke_r).unwrap(),
        n_i: random_nonce(rng),
        n_r: random_nonce(rng),
        ids: SessionIds::new(random_spi(rng), random_spi(rng)).unwrap(),
    }
}

#[test]
fn keyseed_is_dh_then_prf() {
    let mut rng = ChaCha20Rng::seed_from_u64(300);
    for _ in 0..10 {
        let s = session(&mut rng);
        let key = [s.n_i, s.n_r].concat();
        assert_eq!(compute_keyseed(&s.shared, &s.n_i, &s.n_r).unwrap(), hmac_oracle(&key, &s.shared.encode()));
    }
}

#[test]
fn distinct_spis_give_distinct_schedules() {
    let mut rng = ChaCha20Rng::seed_from_u64(301);
    let s = session(&mut rng);
    let ks = compute_keyseed(&s.shared, &s.n_i, &s.n_r).unwrap();
    let mut seen = HashSet::new();
    for _ in 0..50 {
        let ids = SessionIds::new(random_spi(&mut rng), random_spi(&mut rng)).unwrap();
        let sch = derive_sks(&ks, &s.n_i, &s.n_r, &ids);
        for k in sch.all_keys() {
            assert!(seen.insert(*k.as_bytes()));
        }
    }
}

#[test]
fn kpwd_is_manual_prf() {
    let mut rng = ChaCha20Rng::seed_from_u64(302);
    let spwd = random_nonce(&mut rng);
    let s = session(&mut rng);
    let data = [&s.n_i[..], &s.n_r, &s.ids.spi_i, &s.ids.spi_r].concat();
    assert_eq!(derive_kpwd(&spwd, &s.n_i, &s.n_r, &s.ids).as_bytes(), &hmac_oracle(&spwd, &data));
    let s2 = session(&mut rng);
    assert_ne!(derive_kpwd(&spwd, &s.n_i, &s.n_r, &s.ids), derive_kpwd(&spwd, &s2.n_i, &s2.n_r, &s2.ids));
}

#[test]
fn auth_tier1_is_nested_prf() {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let s = session(&mut rng);
    let n_b = random_nonce(&mut rng);
    let (_, ke_r) = ecdhe_keypair(&mut rng);
    let so = b"transcript-and-more";
    let inner = hmac_oracle(&n_b, &[&b"LOCATHE-T1"[..], &[0x52], &s.n_i, &s.n_r].concat());
    let expected = hmac_oracle(&inner, &[&so[..], &ke_r.encode()].concat());
    assert_eq!(compute_auth_tier1(Role::Responder, &n_b, &s.n_i, &s.n_r, &ke_r, so), expected);
}

#[test]
fn signed_octets_bit_flip_sweep() {
    let mut rng = ChaCha20Rng::seed_from_u64(304);
    let mut transcript = vec![0u8; 64];
    rng.fill_bytes(&mut transcript);
    let sk_p = SymmetricKey::random(&mut rng);
    let peer = random_nonce(&mut rng);
    let base = build_signed_octets(&transcript, None, &sk_p, &peer);
    let (_, ke_r) = ecdhe_keypair(&mut rng);
    let n_b = random_nonce(&mut rng);
    let auth = compute_auth_tier1(Role::Initiator, &n_b, &peer, &peer, &ke_r, &base);
    for pos in 0..64 {
        let mut t = transcript.clone();
        t[pos] ^= 0x80;
        let so = build_signed_octets(&t, None, &sk_p, &peer);
        assert_ne!(so, base);
        assert_ne!(compute_auth_tier1(Role::Initiator, &n_b, &peer, &peer, &ke_r, &so), auth);
    }
}

#[test]
fn auth_tier2_truncation_sweep() {
    let mut rng = ChaCha20Rng::seed_from_u64(305);
    let n_b = random_nonce(&mut rng);
    let sk_p = SymmetricKey::random(&mut rng);
    let msgs: Vec<Vec<u8>> = (0..4).map(|i| vec![i as u8; 40 + i]).collect();
    let full = msgs.concat();
    let auth = compute_auth_tier2(&n_b, &full, &sk_p);
    let inner = hmac_oracle(&n_b, b"LOCATHE-T2");
    let skp = hmac_oracle(sk_p.as_bytes(), b"LOCATHE-T2");
    assert_eq!(auth, hmac_oracle(&inner, &[&full[..], &skp].concat()));
    for k in 0..msgs.len() {
        let truncated = msgs[..k].concat();
        assert_ne!(compute_auth_tier2(&n_b, &truncated, &sk_p), auth);
    }
    let mut stale = n_b;
    stale[31] ^= 1;
    assert_ne!(compute_auth_tier2(&stale, &full, &sk_p), auth);
}

#[test]
fn enonce_wrong_keys_yield_other_scalars() {
    let mut rng = ChaCha20Rng::seed_from_u64(306);
    let kpwd = SymmetricKey::random(&mut rng);
    let s = GroupScalar::random(&mut rng);
    let nonce = [7u8; NONCE_LEN];
    let e = make_enonce(&kpwd, &s, &nonce);
    assert!(!e.windows(32).any(|w| w == s.to_bytes()));
    let mut seen = HashSet::new();
    for _ in 0..100 {
        let cand = open_enonce(&SymmetricKey::random(&mut rng), &nonce, &e);
        assert_ne!(cand, s);
        assert!(seen.insert(cand.to_bytes()));
    }
}

#[test]
fn ge_is_sg_plus_shared() {
    let mut rng = ChaCha20Rng::seed_from_u64(307);
    for _ in 0..20 {
        let s = GroupScalar::random(&mut rng);
        let sess = session(&mut rng);
        let ge = compute_ge(&s, &sess.shared).unwrap();
        assert_eq!(ge, GroupPoint::generator().mul(&s).add(&sess.shared));
        let s2 = GroupScalar::random(&mut rng);
        assert_ne!(compute_ge(&s2, &sess.shared).unwrap(), ge);
    }
}

#[test]
fn tier2_keypairs_are_fresh() {
    let mut rng = ChaCha20Rng::seed_from_u64(308);
    let ge = compute_ge(&GroupScalar::random(&mut rng), &session(&mut rng).shared).unwrap();
    let mut seen = HashSet::new();
    for _ in 0..200 {
        let (lsk, lpk) = tier2_keypair(&ge, &mut rng);
        assert_eq!(ge.mul(&lsk), lpk);
        assert!(!lpk.is_identity());
        assert!(seen.insert(lsk.to_bytes()));
    }
}

#[test]
fn auth_shared_secret_agrees_only_on_same_ge() {
    let mut rng = ChaCha20Rng::seed_from_u64(309);
    let sess = session(&mut rng);
    let s = GroupScalar::random(&mut rng);
    let ge = compute_ge(&s, &sess.shared).unwrap();
    let (lsk_i, lpk_i) = tier2_keypair(&ge, &mut rng);
    let (lsk_r, lpk_r) = tier2_keypair(&ge, &mut rng);
    assert_eq!(compute_auth_shared_secret(&lsk_i, &lpk_r).unwrap(), compute_auth_shared_secret(&lsk_r, &lpk_i).unwrap());
    // Responder opened a wrong s: its GE, LPK and shared value diverge.
    let ge_bad = compute_ge(&GroupScalar::random(&mut rng), &sess.shared).unwrap();
    let (lsk_b, lpk_b) = tier2_keypair(&ge_bad, &mut rng);
    assert_ne!(compute_auth_shared_secret(&lsk_i, &lpk_b).unwrap(), compute_auth_shared_secret(&lsk_b, &lpk_i).unwrap());
    assert_eq!(compute_auth_shared_secret(&lsk_i, &GroupPoint::identity()), Err(KeyScheduleError::InvalidPeerPoint));
}

#[test]
fn gtk_skewed_epoch_breaks_final_auth() {
    let mut rng = ChaCha20Rng::seed_from_u64(310);
    let seed = TokenSeed::random(&mut rng);
    let ge = compute_ge(&GroupScalar::random(&mut rng), &session(&mut rng).shared).unwrap();
    let now = Timestamp::from_secs(1_000_000);
    let same = compute_gtk(&ge, &totp(&seed, now));
    assert_eq!(same, compute_gtk(&ge, &totp(&seed, now)));
    assert_eq!(same, hmac_oracle(&ge.encode(), totp(&seed, now).as_bytes()));
    let skewed = compute_gtk(&ge, &totp(&seed, now.offset_secs(seed.step_seconds() as i64)));
    assert_ne!(same, skewed);
    let p = GroupPoint::generator();
    assert_ne!(compute_final_auth(Role::Initiator, b"so", &p, &same), compute_final_auth(Role::Initiator, b"so", &p, &skewed));
}

#[test]
fn final_auth_and_ltk_are_manual_prfs() {
    let mut rng = ChaCha20Rng::seed_from_u64(311);
    let sess = session(&mut rng);
    let gtk = random_nonce(&mut rng);
    let inner = hmac_oracle(&sess.shared.encode(), &[&gtk[..], &[0x49]].concat());
    assert_eq!(compute_final_auth(Role::Initiator, b"octets", &sess.shared, &gtk), hmac_oracle(&inner, b"octets"));
    let data = [&b"LOCATHE-LTK"[..], &sess.n_i, &sess.n_r, &sess.ids.spi_i, &sess.ids.spi_r].concat();
    let ltk = compute_long_term_secret(&sess.shared, &sess.n_i, &sess.n_r, &sess.ids, Timestamp::ZERO);
    assert_eq!(ltk.key(), &hmac_oracle(&sess.shared.encode(), &data));
    let other = session(&mut rng);
    let ltk2 = compute_long_term_secret(&sess.shared, &other.n_i, &other.n_r, &other.ids, Timestamp::ZERO);
    assert_ne!(ltk.key(), ltk2.key());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn enonce_round_trip(seed in any::<u64>(), nonce in any::<[u8; 12]>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let kpwd = SymmetricKey::random(&mut rng);
        let s = GroupScalar::random(&mut rng);
        prop_assert_eq!(open_enonce(&kpwd, &nonce, &make_enonce(&kpwd, &s, &nonce)), s);
    }

    #[test]
    fn sk_derivation_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = session(&mut rng);
        let ks = compute_keyseed(&s.shared, &s.n_i, &s.n_r).unwrap();
        prop_assert_eq!(derive_sks(&ks, &s.n_i, &s.n_r, &s.ids), derive_sks(&ks, &s.n_i, &s.n_r, &s.ids));
    }
}
