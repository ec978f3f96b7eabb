//! Line-oriented test vectors: `name<TAB>input-hex...<TAB>output-hex`.
//!
//! Every input is drawn from the caller's RNG, so a seeded ChaCha20 stream
//! gives byte-identical output on every platform.

use rand_core::CryptoRngCore;

use crate::crypto::*;
use crate::key_schedule::*;
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vector {
    pub name: &'static str,
    pub inputs: Vec<Vec<u8>>,
    pub output: Vec<u8>,
}

impl Vector {
    pub fn line(&self) -> String {
        let mut s = String::from(self.name);
        for i in &self.inputs {
            s.push('\t');
            s.push_str(&hex::encode(i));
        }
        s.push('\t');
        s.push_str(&hex::encode(&self.output));
        s
    }
}

/// Names in emission order.
pub const NAMES: &[&str] = &[
    "prf", "prf_plus", "kdf", "enc_plain", "enc_auth", "totp", "fingerprint", "keyseed", "sks", "kpwd", "enonce",
    "ge", "gtk", "auth_tier1", "auth_tier2", "final_auth", "ltk",
];

fn bytes(rng: &mut impl CryptoRngCore, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

fn arr<const N: usize>(rng: &mut impl CryptoRngCore) -> [u8; N] {
    let mut a = [0u8; N];
    rng.fill_bytes(&mut a);
    a
}

fn u64_be(v: u64) -> Vec<u8> {
    v.to_be_bytes().to_vec()
}

/// `per_op` vectors for each name accepted by `filter` (exact name match).
pub fn generate(rng: &mut impl CryptoRngCore, per_op: usize, filter: Option<&str>) -> Vec<Vector> {
    let mut out = Vec::new();
    for &name in NAMES {
        for _ in 0..per_op {
            // Inputs are drawn even for filtered-out ops so that a filtered
            // dump is a subset of the full dump under the same seed.
            let v = one(name, rng);
            if filter.is_none_or(|f| f == name) {
                out.push(v);
            }
        }
    }
    out
}

fn one(name: &'static str, rng: &mut impl CryptoRngCore) -> Vector {
    let (inputs, output): (Vec<Vec<u8>>, Vec<u8>) = match name {
        "prf" => {
            let k = bytes(rng, 32);
            let m = bytes(rng, 48);
            let o = prf(&PrfKey::new(&k).expect("32-octet key"), &m).to_vec();
            (vec![k, m], o)
        }
        "prf_plus" => {
            let k = bytes(rng, 32);
            let m = bytes(rng, 40);
            let o = prf_plus(&PrfKey::new(&k).expect("32-octet key"), &m, 200).expect("within bound");
            (vec![k, m, u64_be(200)], o)
        }
        "kdf" => {
            let secret = bytes(rng, 32);
            let salt = bytes(rng, 16);
            let o = kdf_stretch(&secret, &salt, 64).expect("non-empty secret").as_bytes().to_vec();
            (vec![secret, salt, u64_be(64)], o)
        }
        "enc_plain" => {
            let k = arr::<32>(rng);
            let n = arr::<NONCE_LEN>(rng);
            let p = bytes(rng, 32);
            let o = enc_plain(&SymmetricKey::from_bytes(k), &n, &p);
            (vec![k.to_vec(), n.to_vec(), p], o)
        }
        "enc_auth" => {
            let k = arr::<32>(rng);
            let n = arr::<NONCE_LEN>(rng);
            let p = bytes(rng, 24);
            let aad = bytes(rng, 22);
            let o = enc_auth(&SymmetricKey::from_bytes(k), &n, &p, &aad);
            (vec![k.to_vec(), n.to_vec(), p, aad], o)
        }
        "totp" => {
            let seed = bytes(rng, 20);
            let t = 1_600_000_000 + (u64::from_be_bytes(arr::<8>(rng)) % 400_000_000);
            let ts = TokenSeed::new(&seed, TokenSeed::DEFAULT_STEP, TokenSeed::DEFAULT_DIGITS).expect("valid seed");
            let o = totp(&ts, Timestamp::from_secs(t)).into_bytes();
            (vec![seed, u64_be(t)], o)
        }
        "fingerprint" => {
            let v = bytes(rng, 32);
            let o = fingerprint(&v).into_bytes();
            (vec![v], o)
        }
        "keyseed" => {
            let (shared, n_i, n_r) = shared_and_nonces(rng);
            let o = compute_keyseed(&shared, &n_i, &n_r).expect("non-identity").to_vec();
            (vec![shared.encode().to_vec(), n_i.to_vec(), n_r.to_vec()], o)
        }
        "sks" => {
            let ks = arr::<32>(rng);
            let (n_i, n_r, ids) = nonces_and_ids(rng);
            let s = derive_sks(&ks, &n_i, &n_r, &ids);
            let o = s.all_keys().iter().flat_map(|k| k.as_bytes().to_vec()).collect();
            (vec![ks.to_vec(), n_i.to_vec(), n_r.to_vec(), ids.octets().to_vec()], o)
        }
        "kpwd" => {
            let spwd = arr::<32>(rng);
            let (n_i, n_r, ids) = nonces_and_ids(rng);
            let o = derive_kpwd(&spwd, &n_i, &n_r, &ids).as_bytes().to_vec();
            (vec![spwd.to_vec(), n_i.to_vec(), n_r.to_vec(), ids.octets().to_vec()], o)
        }
        "enonce" => {
            let kpwd = arr::<32>(rng);
            let s = GroupScalar::random(rng);
            let n = arr::<NONCE_LEN>(rng);
            let o = make_enonce(&SymmetricKey::from_bytes(kpwd), &s, &n);
            (vec![kpwd.to_vec(), s.to_bytes().to_vec(), n.to_vec()], o)
        }
        "ge" => {
            let s = GroupScalar::random(rng);
            let shared = GroupScalar::random(rng).public_point();
            let o = compute_ge(&s, &shared).expect("non-degenerate").encode().to_vec();
            (vec![s.to_bytes().to_vec(), shared.encode().to_vec()], o)
        }
        "gtk" => {
            let ge = GroupScalar::random(rng).public_point();
            let tk = format!("{:08}", u64::from_be_bytes(arr::<8>(rng)) % 100_000_000);
            let o = compute_gtk(&ge, &tk).to_vec();
            (vec![ge.encode().to_vec(), tk.into_bytes()], o)
        }
        "auth_tier1" => {
            let n_b = arr::<32>(rng);
            let (n_i, n_r, _) = nonces_and_ids(rng);
            let ke_r = GroupScalar::random(rng).public_point();
            let so = bytes(rng, 64);
            let o = compute_auth_tier1(Role::Initiator, &n_b, &n_i, &n_r, &ke_r, &so).to_vec();
            (vec![vec![Role::Initiator.octet()], n_b.to_vec(), n_i.to_vec(), n_r.to_vec(), ke_r.encode().to_vec(), so], o)
        }
        "auth_tier2" => {
            let n_b = arr::<32>(rng);
            let so = bytes(rng, 64);
            let skp = arr::<32>(rng);
            let o = compute_auth_tier2(&n_b, &so, &SymmetricKey::from_bytes(skp)).to_vec();
            (vec![n_b.to_vec(), so, skp.to_vec()], o)
        }
        "final_auth" => {
            let so = bytes(rng, 64);
            let auth_shared = GroupScalar::random(rng).public_point();
            let gtk = arr::<32>(rng);
            let o = compute_final_auth(Role::Responder, &so, &auth_shared, &gtk).to_vec();
            (vec![vec![Role::Responder.octet()], so, auth_shared.encode().to_vec(), gtk.to_vec()], o)
        }
        "ltk" => {
            let auth_shared = GroupScalar::random(rng).public_point();
            let (n_i, n_r, ids) = nonces_and_ids(rng);
            let o = compute_long_term_secret(&auth_shared, &n_i, &n_r, &ids, Timestamp::ZERO).key().to_vec();
            (vec![auth_shared.encode().to_vec(), n_i.to_vec(), n_r.to_vec(), ids.octets().to_vec()], o)
        }
        other => unreachable!("unlisted vector {other}"),
    };
    Vector { name, inputs, output }
}

fn nonces_and_ids(rng: &mut impl CryptoRngCore) -> ([u8; 32], [u8; 32], SessionIds) {
    let n_i = random_nonce(rng);
    let n_r = random_nonce(rng);
    let spi_i = random_spi(rng);
    let spi_r = loop {
        let s = random_spi(rng);
        if s != spi_i {
            break s;
        }
    };
    (n_i, n_r, SessionIds::new(spi_i, spi_r).expect("distinct nonzero"))
}

fn shared_and_nonces(rng: &mut impl CryptoRngCore) -> (GroupPoint, [u8; 32], [u8; 32]) {
    let shared = GroupScalar::random(rng).public_point();
    (shared, random_nonce(rng), random_nonce(rng))
}
