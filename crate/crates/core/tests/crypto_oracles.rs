//! Independent oracles for the crypto suite, built on the hand-written HMAC
//! in `common`.

use std::collections::HashSet;

mod common;

use common::hmac_oracle;
use locathe::crypto::*;
use locathe::time::Timestamp;
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

fn rand_bytes(rng: &mut impl RngCore, min: usize, max: usize) -> Vec<u8> {
    let len = min + (rng.next_u32() as usize) % (max - min + 1);
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

#[test]
fn oracle_hmac_matches_rfc4231() {
    // Test cases 1 and 2 of RFC 4231, HMAC-SHA-256 column.
    let tc1 = hmac_oracle(&[0x0b; 20], b"Hi There");
    assert_eq!(hex::encode(tc1), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
    let tc2 = hmac_oracle(b"Jefe", b"what do ya want for nothing?");
    assert_eq!(hex::encode(tc2), "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

#[test]
fn prf_matches_rfc4231_vectors() {
    let k = PrfKey::new(&[0x0b; 20]).unwrap();
    assert_eq!(hex::encode(prf(&k, b"Hi There")), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
    // Test case 6: 131-octet key exceeds PrfKey's 64-octet bound, so use test case 4 instead.
    let k4: Vec<u8> = (1..=25).collect();
    let k = PrfKey::new(&k4).unwrap();
    assert_eq!(hex::encode(prf(&k, &[0xcd; 50])), "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b");
}

#[test]
fn prf_matches_independent_hmac_on_random_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..10 {
        let key = rand_bytes(&mut rng, 1, 64);
        let msg = rand_bytes(&mut rng, 0, 200);
        assert_eq!(prf(&PrfKey::new(&key).unwrap(), &msg), hmac_oracle(&key, &msg));
    }
}

#[test]
fn prf_distinct_messages_give_distinct_outputs() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let key = PrfKey::new(&rand_bytes(&mut rng, 32, 32)).unwrap();
    for _ in 0..1000 {
        let m1 = rand_bytes(&mut rng, 1, 48);
        let mut m2 = m1.clone();
        let i = rng.next_u32() as usize % m2.len();
        m2[i] ^= 1 + (rng.next_u32() % 255) as u8;
        assert_ne!(prf(&key, &m1), prf(&key, &m2));
    }
}

#[test]
fn prf_plus_96_matches_step_by_step_iteration() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let key = rand_bytes(&mut rng, 32, 32);
    let data = rand_bytes(&mut rng, 70, 70);
    let t1 = hmac_oracle(&key, &[data.as_slice(), &[1]].concat());
    let t2 = hmac_oracle(&key, &[&t1[..], &data, &[2]].concat());
    let t3 = hmac_oracle(&key, &[&t2[..], &data, &[3]].concat());
    let expected = [t1, t2, t3].concat();
    assert_eq!(prf_plus(&PrfKey::new(&key).unwrap(), &data, 96).unwrap(), expected);
    assert_eq!(prf_plus(&PrfKey::new(&key).unwrap(), &data, 80).unwrap(), expected[..80]);
}

#[test]
fn prf_plus_rejects_oversize_and_allows_maximum() {
    let k = PrfKey::new(b"k").unwrap();
    assert!(matches!(prf_plus(&k, b"d", PRF_PLUS_MAX + 1), Err(CryptoError::LengthTooLarge { .. })));
    assert_eq!(prf_plus(&k, b"d", PRF_PLUS_MAX).unwrap().len(), 255 * 32);
}

#[test]
fn kdf_single_iteration_is_one_hmac_block() {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    for _ in 0..5 {
        let secret = rand_bytes(&mut rng, 1, 40);
        let salt = rand_bytes(&mut rng, 16, 16);
        let expected = hmac_oracle(&secret, &[salt.as_slice(), &[0, 0, 0, 1]].concat());
        assert_eq!(kdf_stretch(&secret, &salt, 1).unwrap().as_bytes(), &expected);
    }
}

#[test]
fn kdf_two_iterations_xor_chain() {
    let secret = b"correct horse";
    let salt = [7u8; 16];
    let u1 = hmac_oracle(secret, &[salt.as_slice(), &[0, 0, 0, 1]].concat());
    let u2 = hmac_oracle(secret, &u1);
    let expected: Vec<u8> = u1.iter().zip(u2).map(|(a, b)| a ^ b).collect();
    assert_eq!(kdf_stretch(secret, &salt, 2).unwrap().as_bytes().as_slice(), expected.as_slice());
}

#[test]
fn kdf_differing_salts_differ() {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let secret = rand_bytes(&mut rng, 12, 12);
    let mut seen = HashSet::new();
    for _ in 0..50 {
        let salt = rand_bytes(&mut rng, 16, 16);
        assert!(seen.insert(*kdf_stretch(&secret, &salt, 10).unwrap().as_bytes()));
    }
    assert_eq!(kdf_stretch(b"", b"s", 1).unwrap_err(), CryptoError::EmptySecret);
}

#[test]
fn keypair_draws_are_distinct_and_consistent() {
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let mut seen = HashSet::new();
    for _ in 0..1000 {
        let (s, p) = ecdhe_keypair(&mut rng);
        assert!(!p.is_identity());
        assert!(seen.insert(s.to_bytes()));
        assert_eq!(s.public_point(), p);
    }
}

#[test]
fn dh_commutes_over_100_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for _ in 0..100 {
        let (a, pa) = ecdhe_keypair(&mut rng);
        let (b, pb) = ecdhe_keypair(&mut rng);
        assert_eq!(dh(&a, &pb).unwrap(), dh(&b, &pa).unwrap());
    }
}

#[test]
fn dec_plain_under_wrong_keys_is_total_and_distinct() {
    let mut rng = ChaCha20Rng::seed_from_u64(18);
    let key = SymmetricKey::random(&mut rng);
    let nonce = [3u8; NONCE_LEN];
    let pt = rand_bytes(&mut rng, 32, 32);
    let ct = enc_plain(&key, &nonce, &pt);
    let mut seen = HashSet::new();
    for _ in 0..100 {
        let wrong = SymmetricKey::random(&mut rng);
        let out = dec_plain(&wrong, &nonce, &ct);
        assert_eq!(out.len(), pt.len());
        assert_ne!(out, pt);
        assert!(seen.insert(out));
    }
}

#[test]
fn aead_rejects_every_single_bit_flip() {
    let mut rng = ChaCha20Rng::seed_from_u64(19);
    let key = SymmetricKey::random(&mut rng);
    let nonce = [9u8; NONCE_LEN];
    let aad = b"header";
    let ct = enc_auth(&key, &nonce, b"payload", aad);
    for bit in 0..ct.len() * 8 {
        let mut bad = ct.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        assert!(dec_auth(&key, &nonce, &bad, aad).is_err());
    }
    for bit in 0..aad.len() * 8 {
        let mut bad = aad.to_vec();
        bad[bit / 8] ^= 1 << (bit % 8);
        assert!(dec_auth(&key, &nonce, &ct, &bad).is_err());
    }
    for bit in 0..NONCE_LEN * 8 {
        let mut bad = nonce;
        bad[bit / 8] ^= 1 << (bit % 8);
        assert!(dec_auth(&key, &bad, &ct, aad).is_err());
    }
}

#[test]
fn totp_epochs_differ_across_boundary() {
    let seed = TokenSeed::new(&[0x42; 32], 30, 8).unwrap();
    assert_eq!(totp(&seed, Timestamp::from_secs(0)), totp(&seed, Timestamp::from_secs(29)));
    assert_ne!(totp(&seed, Timestamp::from_secs(0)), totp(&seed, Timestamp::from_secs(30)));
}

#[test]
fn totp_matches_manual_truncation() {
    let seed_bytes = [0x17u8; 20];
    let seed = TokenSeed::new(&seed_bytes, 30, 6).unwrap();
    let mac = hmac_oracle(&seed_bytes, &(100u64 / 30).to_be_bytes());
    let off = (mac[31] & 0x0f) as usize;
    let code = (u32::from_be_bytes(mac[off..off + 4].try_into().unwrap()) & 0x7fff_ffff) % 1_000_000;
    assert_eq!(totp(&seed, Timestamp::from_secs(100)), format!("{code:06}"));
}

proptest! {
    #[test]
    fn prf_plus_prefix_property(key in proptest::collection::vec(any::<u8>(), 1..64),
                                data in proptest::collection::vec(any::<u8>(), 0..64),
                                n in 0usize..200, extra in 0usize..200) {
        let k = PrfKey::new(&key).unwrap();
        let short = prf_plus(&k, &data, n).unwrap();
        let long = prf_plus(&k, &data, n + extra).unwrap();
        prop_assert_eq!(&long[..n], &short[..]);
    }

    #[test]
    fn enc_plain_round_trip(key in any::<[u8; 32]>(), nonce in any::<[u8; 12]>(),
                            pt in proptest::collection::vec(any::<u8>(), 0..128)) {
        let k = SymmetricKey::from_bytes(key);
        prop_assert_eq!(dec_plain(&k, &nonce, &enc_plain(&k, &nonce, &pt)), pt);
    }

    #[test]
    fn point_encoding_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (_, p) = ecdhe_keypair(&mut rng);
        prop_assert_eq!(GroupPoint::decode_public(&p.encode()).unwrap(), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dh_commutativity(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (a, pa) = ecdhe_keypair(&mut rng);
        let (b, pb) = ecdhe_keypair(&mut rng);
        prop_assert_eq!(dh(&a, &pb).unwrap(), dh(&b, &pa).unwrap());
    }
}
