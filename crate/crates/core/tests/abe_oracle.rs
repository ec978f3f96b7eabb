//! ABE gate checked against a brute-force subset oracle that evaluates its
//! own copy of the policy tree.

use std::time::Duration;

use locathe::abe::*;
use locathe::time::Timestamp;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const UNIVERSE: [(&str, &str); 6] = [("campus", "a"), ("campus", "b"), ("campus", "c"), ("city", "d"), ("city", "e"), ("city", "f")];
const WEEK: Duration = Duration::from_secs(7 * 86_400);

/// Oracle tree: leaves are indices into UNIVERSE.
#[derive(Debug, Clone)]
enum Tree {
    Leaf(usize),
    And(Vec<Tree>),
    Or(Vec<Tree>),
    Thr(usize, Vec<Tree>),
}

impl Tree {
    fn eval(&self, mask: u32) -> bool {
        match self {
            Tree::Leaf(i) => mask & (1 << i) != 0,
            Tree::And(c) => c.iter().all(|t| t.eval(mask)),
            Tree::Or(c) => c.iter().any(|t| t.eval(mask)),
            Tree::Thr(k, c) => c.iter().filter(|t| t.eval(mask)).count() >= *k,
        }
    }

    fn render(&self) -> String {
        let join = |c: &[Tree]| c.iter().map(Tree::render).collect::<Vec<_>>().join(", ");
        match self {
            Tree::Leaf(i) => format!("{}:{}", UNIVERSE[*i].0, UNIVERSE[*i].1),
            Tree::And(c) => format!("AND({})", join(c)),
            Tree::Or(c) => format!("OR({})", join(c)),
            Tree::Thr(k, c) => format!("THRESHOLD({k}, {})", join(c)),
        }
    }
}

fn random_tree(rng: &mut impl RngCore, depth: usize) -> Tree {
    if depth == 0 || rng.next_u32().is_multiple_of(4) {
        return Tree::Leaf(rng.next_u32() as usize % 6);
    }
    let n = 1 + rng.next_u32() as usize % 3;
    let children: Vec<Tree> = (0..n).map(|_| random_tree(rng, depth - 1)).collect();
    match rng.next_u32() % 3 {
        0 => Tree::And(children),
        1 => Tree::Or(children),
        _ => Tree::Thr(1 + rng.next_u32() as usize % n, children),
    }
}

struct Fixture {
    reg: AuthorityRegistry,
    pp: PublicParams,
}

fn fixture(rng: &mut ChaCha20Rng) -> Fixture {
    let mut reg = AuthorityRegistry::new();
    authority_setup(&mut reg, "campus", &["a", "b", "c"], rng).unwrap();
    authority_setup(&mut reg, "city", &["d", "e", "f"], rng).unwrap();
    let pp = reg.public_params();
    Fixture { reg, pp }
}

fn keys_for(f: &Fixture, gid: &str, mask: u32, now: Timestamp, validity: Duration) -> Vec<UserAbeKey> {
    ["campus", "city"]
        .iter()
        .map(|auth| {
            let attrs: AttributeSet = UNIVERSE
                .iter()
                .enumerate()
                .filter(|(i, (a, _))| a == auth && mask & (1 << i) != 0)
                .map(|(_, (a, n))| Attribute::new(*a, *n))
                .collect();
            keygen(f.reg.get(auth).unwrap(), gid, &attrs, now, validity).unwrap()
        })
        .collect()
}

fn mask_set(mask: u32) -> AttributeSet {
    UNIVERSE.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, (a, n))| Attribute::new(*a, *n)).collect()
}

#[test]
fn policy_satisfied_agrees_with_subset_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for _ in 0..300 {
        let t = random_tree(&mut rng, 3);
        let p: AccessPolicy = t.render().parse().unwrap();
        for mask in 0..64u32 {
            assert_eq!(policy_satisfied(&p, &mask_set(mask)), t.eval(mask), "{} / {mask:06b}", t.render());
        }
    }
}

#[test]
fn decrypt_succeeds_exactly_when_oracle_says_so() {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let f = fixture(&mut rng);
    let now = Timestamp::from_secs(1_000);
    let keys: Vec<Vec<UserAbeKey>> = (0..64).map(|m| keys_for(&f, "alice", m, now, WEEK)).collect();
    for _ in 0..25 {
        let t = random_tree(&mut rng, 3);
        let p: AccessPolicy = t.render().parse().unwrap();
        let ct = encrypt(&f.pp, &p, b"broadcast nonce", &mut rng).unwrap();
        for mask in 0..64u32 {
            let got = decrypt(&keys[mask as usize], &ct, now);
            if t.eval(mask) {
                assert_eq!(got.unwrap(), b"broadcast nonce", "{} / {mask:06b}", t.render());
            } else {
                assert_eq!(got.unwrap_err(), AbeError::PolicyNotSatisfied, "{} / {mask:06b}", t.render());
            }
        }
    }
}

#[test]
fn threshold_two_of_three() {
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let f = fixture(&mut rng);
    let now = Timestamp::ZERO;
    let p: AccessPolicy = "THRESHOLD(2, campus:a, campus:b, campus:c)".parse().unwrap();
    let ct = encrypt(&f.pp, &p, b"n", &mut rng).unwrap();
    assert!(decrypt(&keys_for(&f, "u", 0b101, now, WEEK), &ct, now).is_ok());
    assert_eq!(decrypt(&keys_for(&f, "u", 0b010, now, WEEK), &ct, now).unwrap_err(), AbeError::PolicyNotSatisfied);
}

#[test]
fn two_authorities_compose_under_one_gid() {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let f = fixture(&mut rng);
    let now = Timestamp::ZERO;
    let p: AccessPolicy = "AND(campus:a, city:d)".parse().unwrap();
    let ct = encrypt(&f.pp, &p, b"n", &mut rng).unwrap();
    let keys = keys_for(&f, "u", 0b001001, now, WEEK);
    assert!(policy_satisfied(&p, &keys[0].attributes().union(&keys[1].attributes())));
    assert_eq!(decrypt(&keys, &ct, now).unwrap(), b"n");
}

#[test]
fn split_policies_resist_cross_gid_combination() {
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let f = fixture(&mut rng);
    let now = Timestamp::ZERO;
    for (policy, m1, m2) in [
        ("AND(campus:a, city:d)", 0b000001u32, 0b001000u32),
        ("AND(campus:a, campus:b)", 0b01, 0b10),
        ("THRESHOLD(2, campus:a, campus:b, city:e)", 0b000001, 0b010000),
        ("AND(OR(campus:a, campus:b), city:f)", 0b000010, 0b100000),
    ] {
        let p: AccessPolicy = policy.parse().unwrap();
        let ct = encrypt(&f.pp, &p, b"n", &mut rng).unwrap();
        let mut keys = keys_for(&f, "alice", m1, now, WEEK);
        keys.extend(keys_for(&f, "mallory", m2, now, WEEK));
        assert_eq!(decrypt(&keys, &ct, now).unwrap_err(), AbeError::PolicyNotSatisfied, "{policy}");
        // The combination itself is computed and fails authentication.
        assert_eq!(try_mixed_combination(&keys, &ct, now).unwrap_err(), AbeError::DecryptFailed, "{policy}");
        // Each user alone is insufficient too.
        assert!(!policy_satisfied(&p, &mask_set(m1)) && !policy_satisfied(&p, &mask_set(m2)));
    }
}

#[test]
fn forged_shares_never_open_the_body() {
    let mut rng = ChaCha20Rng::seed_from_u64(105);
    let f = fixture(&mut rng);
    let now = Timestamp::ZERO;
    // A rogue authority with the same identifiers but its own master secret.
    let mut rogue = AuthorityRegistry::new();
    authority_setup(&mut rogue, "campus", &["a", "b", "c"], &mut rng).unwrap();
    let attrs: AttributeSet = [Attribute::new("campus", "a")].into_iter().collect();
    let forged = keygen(rogue.get("campus").unwrap(), "mallory", &attrs, now, WEEK).unwrap();
    for _ in 0..20 {
        let ct = encrypt(&f.pp, &"campus:a".parse().unwrap(), b"n", &mut rng).unwrap();
        assert_eq!(decrypt(std::slice::from_ref(&forged), &ct, now).unwrap_err(), AbeError::DecryptFailed);
    }
}

#[test]
fn expired_keys_report_key_expired() {
    let mut rng = ChaCha20Rng::seed_from_u64(106);
    let f = fixture(&mut rng);
    let p: AccessPolicy = "AND(campus:a, city:d)".parse().unwrap();
    let ct = encrypt(&f.pp, &p, b"n", &mut rng).unwrap();
    let issued = Timestamp::ZERO;
    let mut keys = keys_for(&f, "u", 0b001001, issued, WEEK);
    assert!(decrypt(&keys, &ct, Timestamp::from_secs(WEEK.as_secs() - 1)).is_ok());
    assert_eq!(decrypt(&keys, &ct, issued + WEEK).unwrap_err(), AbeError::KeyExpired);
    // A fresh copy of the city key restores access only if the campus one is fresh too.
    let later = issued + WEEK;
    keys.push(keys_for(&f, "u", 0b001000, later, WEEK).pop().unwrap());
    assert_eq!(decrypt(&keys, &ct, later).unwrap_err(), AbeError::KeyExpired);
    keys.push(keys_for(&f, "u", 0b000001, later, WEEK).remove(0));
    assert!(decrypt(&keys, &ct, later).is_ok());
}

#[test]
fn removing_an_authority_leaves_other_policies_intact() {
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let mut f = fixture(&mut rng);
    let now = Timestamp::ZERO;
    let keys = keys_for(&f, "u", 0b111111, now, WEEK);
    f.reg.remove("city");
    let pp = f.reg.public_params();
    let ct = encrypt(&pp, &"OR(campus:a, campus:c)".parse().unwrap(), b"n", &mut rng).unwrap();
    assert_eq!(decrypt(&keys, &ct, now).unwrap(), b"n");
    assert!(matches!(encrypt(&pp, &"city:d".parse().unwrap(), b"n", &mut rng), Err(AbeError::UnknownAuthority(_))));
}

#[test]
fn policy_is_public_in_ciphertext() {
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    let f = fixture(&mut rng);
    let p: AccessPolicy = "OR(campus:a, city:e)".parse().unwrap();
    let ct = encrypt(&f.pp, &p, b"n", &mut rng).unwrap();
    let back = AbeCiphertext::from_bytes(&ct.to_bytes()).unwrap();
    assert_eq!(back.policy(), &p);
}
