//! Multi-authority ciphertext-policy ABE gating the broadcast nonce.
//!
//! The reference backend is a discrete-log analogue of decentralized CP-ABE:
//! each authority publishes `P_a = alpha_a * G` and `Y_a = y_a * G` for every
//! attribute in its universe, and a user with global id `gid` receives the
//! scalar share `k_a = alpha_a + H(gid) * y_a`.
//!
//! Encryption shares a fresh `sigma` (and an independent sharing of zero, the
//! `omega` values) down the policy tree and publishes per leaf
//!
//! ```text
//! R = r*G,   E = lambda*G + r*P_a,   F = omega*G + r*Y_a
//! ```
//!
//! A key holder computes `E + H(gid)*F - k_a*R = lambda*G + H(gid)*omega*G`;
//! recombination cancels the omega terms only when every used share carries
//! the same `H(gid)`, which is what binds collusion to one user.
//!
//! This backend is for desk-scale functional fidelity. Two users holding the
//! same attribute under different gids can jointly solve for `alpha_a, y_a`;
//! a pairing backend closes that gap behind the same interface.

mod lsss;
mod policy;

use std::collections::BTreeMap;
use std::time::Duration;

use p256::elliptic_curve::ff::{Field, PrimeField};
use p256::{FieldBytes, ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroize;

pub use policy::{policy_satisfied, AccessPolicy, Attribute, AttributeSet, PolicyNode};

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{dec_auth, enc_auth, prf_parts, scalar_from_prf, GroupPoint, SymmetricKey, NONCE_LEN, POINT_LEN};
use crate::time::Timestamp;

pub const CIPHERTEXT_FORMAT: u8 = 1;
const LEAF_TAG: u8 = 0x4c;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbeError {
    #[error("authority `{0}` already registered")]
    DuplicateAuthority(String),
    #[error("authority `{0}` not registered")]
    UnknownAuthority(String),
    #[error("attribute `{0}` belongs to another authority")]
    ForeignAttribute(String),
    #[error("attribute `{0}` is not in its authority's universe")]
    UnknownAttribute(String),
    #[error("attributes do not satisfy the access policy")]
    PolicyNotSatisfied,
    #[error("policy satisfiable only with expired keys")]
    KeyExpired,
    #[error("validity must be positive")]
    InvalidValidity,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy syntax: {0}")]
    PolicySyntax(String),
    #[error("malformed ABE encoding: {0}")]
    Malformed(&'static str),
    #[error("ciphertext body failed authentication")]
    DecryptFailed,
}

impl From<CodecError> for AbeError {
    fn from(_: CodecError) -> Self {
        AbeError::Malformed("truncated or oversized section")
    }
}

fn gid_scalar(gid: &str) -> Scalar {
    scalar_from_prf(&prf_parts(b"LOCATHE-ABE-GID", &[gid.as_bytes()])).inner()
}

fn scalar_bytes(s: &Scalar) -> [u8; 32] {
    s.to_repr().into()
}

fn scalar_parse(b: &[u8; 32]) -> Option<Scalar> {
    Option::from(Scalar::from_repr(FieldBytes::from(*b)))
}

/// Public half of one authority: per-attribute `(P_a, Y_a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthorityPublicParams {
    pub authority_id: String,
    attributes: BTreeMap<String, (GroupPoint, GroupPoint)>,
}

impl AuthorityPublicParams {
    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_section(self.authority_id.as_bytes()).expect("identifier fits");
        w.put_u16(self.attributes.len() as u16);
        for (name, (p, y)) in &self.attributes {
            w.put_section(name.as_bytes()).expect("identifier fits");
            w.put_raw(&p.encode()).put_raw(&y.encode());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::new(bytes);
        let authority_id = String::from_utf8(r.section()?.to_vec()).map_err(|_| AbeError::Malformed("authority id"))?;
        let n = r.u16()?;
        let mut attributes = BTreeMap::new();
        for _ in 0..n {
            let name = String::from_utf8(r.section()?.to_vec()).map_err(|_| AbeError::Malformed("attribute name"))?;
            let p = GroupPoint::decode_public(r.take(POINT_LEN)?).map_err(|_| AbeError::Malformed("attribute point"))?;
            let y = GroupPoint::decode_public(r.take(POINT_LEN)?).map_err(|_| AbeError::Malformed("attribute point"))?;
            if attributes.insert(name, (p, y)).is_some() {
                return Err(AbeError::Malformed("duplicate attribute"));
            }
        }
        r.finish()?;
        Ok(AuthorityPublicParams { authority_id, attributes })
    }
}

/// One authority's master secret and derived public parameters.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "AuthorityRepr", into = "AuthorityRepr")]
pub struct AuthorityKeys {
    authority_id: String,
    master_secret: [u8; 32],
    public: AuthorityPublicParams,
}

#[derive(Serialize, Deserialize)]
struct AuthorityRepr {
    authority_id: String,
    #[serde(with = "crate::b64::array")]
    master_secret: [u8; 32],
    universe: Vec<String>,
}

impl From<AuthorityKeys> for AuthorityRepr {
    fn from(k: AuthorityKeys) -> Self {
        AuthorityRepr {
            universe: k.public.attributes.keys().cloned().collect(),
            authority_id: k.authority_id.clone(),
            master_secret: k.master_secret,
        }
    }
}

impl TryFrom<AuthorityRepr> for AuthorityKeys {
    type Error = AbeError;

    fn try_from(r: AuthorityRepr) -> Result<Self, AbeError> {
        AuthorityKeys::from_master(&r.authority_id, r.master_secret, &r.universe)
    }
}

impl Drop for AuthorityKeys {
    fn drop(&mut self) {
        self.master_secret.zeroize();
    }
}

impl std::fmt::Debug for AuthorityKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthorityKeys").field("authority_id", &self.authority_id).finish_non_exhaustive()
    }
}

impl AuthorityKeys {
    fn from_master(authority_id: &str, master_secret: [u8; 32], universe: &[impl AsRef<str>]) -> Result<Self, AbeError> {
        let probe = Attribute::new(authority_id, "x");
        if probe.to_string().parse::<Attribute>().is_err() {
            return Err(AbeError::InvalidPolicy(format!("bad authority id `{authority_id}`")));
        }
        let mut attributes = BTreeMap::new();
        for name in universe {
            let name = name.as_ref();
            let attr = Attribute::new(authority_id, name);
            if attr.to_string().parse::<Attribute>().is_err() {
                return Err(AbeError::UnknownAttribute(attr.to_string()));
            }
            let (alpha, y) = Self::attribute_secrets(&master_secret, name);
            attributes.insert(
                name.to_string(),
                (GroupPoint::from_inner(ProjectivePoint::GENERATOR * alpha), GroupPoint::from_inner(ProjectivePoint::GENERATOR * y)),
            );
        }
        Ok(AuthorityKeys {
            authority_id: authority_id.to_string(),
            master_secret,
            public: AuthorityPublicParams { authority_id: authority_id.to_string(), attributes },
        })
    }

    fn attribute_secrets(master: &[u8; 32], name: &str) -> (Scalar, Scalar) {
        let alpha = scalar_from_prf(&prf_parts(master, &[b"alpha", name.as_bytes()])).inner();
        let y = scalar_from_prf(&prf_parts(master, &[b"y", name.as_bytes()])).inner();
        (alpha, y)
    }

    pub fn authority_id(&self) -> &str {
        &self.authority_id
    }

    pub fn public_params(&self) -> &AuthorityPublicParams {
        &self.public
    }

    pub fn master_secret(&self) -> &[u8; 32] {
        &self.master_secret
    }
}

/// Authorities known to one party. Writers (`authority_setup`, `remove`) need
/// `&mut`; share behind a lock if readers run concurrently.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorityRegistry {
    authorities: BTreeMap<String, AuthorityKeys>,
}

impl AuthorityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, authority_id: &str) -> Option<&AuthorityKeys> {
        self.authorities.get(authority_id)
    }

    pub fn remove(&mut self, authority_id: &str) -> Option<AuthorityKeys> {
        self.authorities.remove(authority_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.authorities.keys().map(String::as_str)
    }

    pub fn public_params(&self) -> PublicParams {
        let mut pp = PublicParams::default();
        for k in self.authorities.values() {
            pp.insert(k.public.clone());
        }
        pp
    }
}

/// Independent setup of one authority over a fixed attribute universe.
pub fn authority_setup<'a>(
    registry: &'a mut AuthorityRegistry,
    authority_id: &str,
    universe: &[&str],
    rng: &mut impl CryptoRngCore,
) -> Result<&'a AuthorityKeys, AbeError> {
    if registry.authorities.contains_key(authority_id) {
        return Err(AbeError::DuplicateAuthority(authority_id.to_string()));
    }
    let mut master = [0u8; 32];
    rng.fill_bytes(&mut master);
    let keys = AuthorityKeys::from_master(authority_id, master, universe)?;
    master.zeroize();
    Ok(registry.authorities.entry(authority_id.to_string()).or_insert(keys))
}

/// The public parameters an encryptor needs, keyed by authority id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PublicParams {
    authorities: BTreeMap<String, AuthorityPublicParams>,
}

impl PublicParams {
    pub fn insert(&mut self, pp: AuthorityPublicParams) {
        self.authorities.insert(pp.authority_id.clone(), pp);
    }

    pub fn remove(&mut self, authority_id: &str) -> Option<AuthorityPublicParams> {
        self.authorities.remove(authority_id)
    }

    fn lookup(&self, a: &Attribute) -> Result<(ProjectivePoint, ProjectivePoint), AbeError> {
        let auth = self.authorities.get(&a.authority).ok_or_else(|| AbeError::UnknownAuthority(a.authority.clone()))?;
        let (p, y) = auth.attributes.get(&a.name).ok_or_else(|| AbeError::UnknownAttribute(a.to_string()))?;
        Ok((p.inner(), y.inner()))
    }
}

/// A user's key from one authority. Valid on `[issued_at, expires_at)`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAbeKey {
    pub user_gid: String,
    pub authority_id: String,
    #[serde(with = "share_map")]
    shares: BTreeMap<Attribute, [u8; 32]>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

mod share_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Attribute, [u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        let enc: BTreeMap<String, String> = m.iter().map(|(k, v)| (k.to_string(), crate::b64::encode(v))).collect();
        enc.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Attribute, [u8; 32]>, D::Error> {
        use serde::de::Error;
        let enc = BTreeMap::<String, String>::deserialize(d)?;
        enc.into_iter()
            .map(|(k, v)| {
                let attr: Attribute = k.parse().map_err(D::Error::custom)?;
                let raw = crate::b64::decode(&v).map_err(D::Error::custom)?;
                let arr: [u8; 32] = raw.try_into().map_err(|_| D::Error::custom("share must be 32 octets"))?;
                scalar_parse(&arr).ok_or_else(|| D::Error::custom("share out of range"))?;
                Ok((attr, arr))
            })
            .collect()
    }
}

impl Drop for UserAbeKey {
    fn drop(&mut self) {
        for v in self.shares.values_mut() {
            v.zeroize();
        }
    }
}

impl std::fmt::Debug for UserAbeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserAbeKey")
            .field("user_gid", &self.user_gid)
            .field("authority_id", &self.authority_id)
            .field("attributes", &self.attributes())
            .field("issued_at", &self.issued_at)
            .field("expires_at", &self.expires_at)
            .finish()
    }
}

impl UserAbeKey {
    pub fn attributes(&self) -> AttributeSet {
        self.shares.keys().cloned().collect()
    }

    pub fn is_valid_at(&self, now: Timestamp) -> bool {
        self.issued_at <= now && now < self.expires_at
    }

    /// Raw share octets; exposed so transcript scans can look for them.
    pub fn share_bytes(&self) -> impl Iterator<Item = &[u8; 32]> {
        self.shares.values()
    }

    fn share(&self, a: &Attribute) -> Option<Scalar> {
        self.shares.get(a).and_then(scalar_parse)
    }
}

pub fn keygen(
    auth: &AuthorityKeys,
    user_gid: &str,
    attrs: &AttributeSet,
    now: Timestamp,
    validity: Duration,
) -> Result<UserAbeKey, AbeError> {
    if validity.is_zero() {
        return Err(AbeError::InvalidValidity);
    }
    let h = gid_scalar(user_gid);
    let mut shares = BTreeMap::new();
    for a in attrs {
        if a.authority != auth.authority_id {
            return Err(AbeError::ForeignAttribute(a.to_string()));
        }
        if !auth.public.attributes.contains_key(&a.name) {
            return Err(AbeError::UnknownAttribute(a.to_string()));
        }
        let (alpha, y) = AuthorityKeys::attribute_secrets(&auth.master_secret, &a.name);
        shares.insert(a.clone(), scalar_bytes(&(alpha + h * y)));
    }
    Ok(UserAbeKey {
        user_gid: user_gid.to_string(),
        authority_id: auth.authority_id.clone(),
        shares,
        issued_at: now,
        expires_at: now + validity,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LeafCt {
    r: GroupPoint,
    e: GroupPoint,
    f: GroupPoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbeCiphertext {
    policy: AccessPolicy,
    leaves: Vec<LeafCt>,
    body: Vec<u8>,
}

impl AbeCiphertext {
    pub fn policy(&self) -> &AccessPolicy {
        &self.policy
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// `format(1) || section(policy tokens) || u16 n || n * (tag(1) || R || E || F) || section(body)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CIPHERTEXT_FORMAT);
        w.put_section(&self.policy.to_bytes()).expect("policy fits");
        w.put_u16(self.leaves.len() as u16);
        for l in &self.leaves {
            w.put_u8(LEAF_TAG).put_raw(&l.r.encode()).put_raw(&l.e.encode()).put_raw(&l.f.encode());
        }
        w.put_section(&self.body).expect("body fits");
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != CIPHERTEXT_FORMAT {
            return Err(AbeError::Malformed("unsupported ciphertext format"));
        }
        let policy = AccessPolicy::from_bytes(r.section()?)?;
        let n = r.u16()? as usize;
        if n != policy.leaves().len() {
            return Err(AbeError::Malformed("leaf count differs from policy"));
        }
        let point = |r: &mut Reader<'_>| -> Result<GroupPoint, AbeError> {
            GroupPoint::decode(r.take(POINT_LEN)?).map_err(|_| AbeError::Malformed("leaf point"))
        };
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            if r.u8()? != LEAF_TAG {
                return Err(AbeError::Malformed("leaf tag"));
            }
            let rp = GroupPoint::decode_public(r.take(POINT_LEN)?).map_err(|_| AbeError::Malformed("leaf R"))?;
            leaves.push(LeafCt { r: rp, e: point(&mut r)?, f: point(&mut r)? });
        }
        let body = r.section()?.to_vec();
        r.finish()?;
        if body.is_empty() {
            return Err(AbeError::Malformed("empty body"));
        }
        Ok(AbeCiphertext { policy, leaves, body })
    }
}

fn content_key(sigma_g: &ProjectivePoint) -> SymmetricKey {
    SymmetricKey::from_bytes(prf_parts(&GroupPoint::from_inner(*sigma_g).encode(), &[b"LOCATHE-ABE-CK"]))
}

const BODY_NONCE: [u8; NONCE_LEN] = [0; NONCE_LEN];

pub fn encrypt(
    pp: &PublicParams,
    policy: &AccessPolicy,
    plaintext: &[u8],
    rng: &mut impl CryptoRngCore,
) -> Result<AbeCiphertext, AbeError> {
    let attrs: Vec<_> = policy.leaves().into_iter().map(|a| pp.lookup(a)).collect::<Result<_, _>>()?;
    let sigma = Scalar::random(&mut *rng);
    let mut lambdas = Vec::new();
    lsss::share(policy.root(), sigma, rng, &mut lambdas);
    let mut omegas = Vec::new();
    lsss::share(policy.root(), Scalar::ZERO, rng, &mut omegas);

    let g = ProjectivePoint::GENERATOR;
    let leaves = attrs
        .iter()
        .zip(lambdas.iter().zip(&omegas))
        .map(|((p, y), (lambda, omega))| {
            let r = crate::crypto::GroupScalar::random(rng).inner();
            LeafCt {
                r: GroupPoint::from_inner(g * r),
                e: GroupPoint::from_inner(g * lambda + *p * r),
                f: GroupPoint::from_inner(g * omega + *y * r),
            }
        })
        .collect();
    // The content key is fresh per ciphertext, so a fixed nonce is safe.
    let body = enc_auth(&content_key(&(g * sigma)), &BODY_NONCE, plaintext, &policy.to_bytes());
    Ok(AbeCiphertext { policy: policy.clone(), leaves, body })
}

/// Attempt decryption with one share per used leaf; each share carries its own gid scalar.
fn open_with(ct: &AbeCiphertext, pick: &dyn Fn(&Attribute) -> Option<(Scalar, Scalar)>) -> Result<Vec<u8>, AbeError> {
    let leaves = ct.policy.leaves();
    let coeffs = lsss::reconstruct(ct.policy.root(), &|a, _| pick(a).is_some()).ok_or(AbeError::PolicyNotSatisfied)?;
    let mut acc = ProjectivePoint::IDENTITY;
    for (i, c) in coeffs {
        let (k, h) = pick(leaves[i]).expect("reconstruct only selects held leaves");
        let l = &ct.leaves[i];
        let v = l.e.inner() + l.f.inner() * h - l.r.inner() * k;
        acc += v * c;
    }
    dec_auth(&content_key(&acc), &BODY_NONCE, &ct.body, &ct.policy.to_bytes()).map_err(|_| AbeError::DecryptFailed)
}

/// Decrypt with the union of unexpired keys of a single gid.
///
/// Keys are grouped by gid; each group is tried alone. If only a mixture of
/// gids covers the policy, the mixed combination is attempted and fails.
pub fn decrypt(keys: &[UserAbeKey], ct: &AbeCiphertext, now: Timestamp) -> Result<Vec<u8>, AbeError> {
    let mut groups: BTreeMap<&str, Vec<&UserAbeKey>> = BTreeMap::new();
    for k in keys {
        groups.entry(k.user_gid.as_str()).or_default().push(k);
    }
    let live_attrs = |ks: &[&UserAbeKey], all: bool| -> AttributeSet {
        ks.iter().filter(|k| all || k.is_valid_at(now)).flat_map(|k| k.shares.keys().cloned()).collect()
    };

    let mut last_err = None;
    for (gid, ks) in &groups {
        if !policy_satisfied(&ct.policy, &live_attrs(ks, false)) {
            continue;
        }
        let h = gid_scalar(gid);
        let pick = |a: &Attribute| ks.iter().filter(|k| k.is_valid_at(now)).find_map(|k| k.share(a)).map(|s| (s, h));
        match open_with(ct, &pick) {
            Ok(pt) => return Ok(pt),
            Err(e) => last_err = Some(e),
        }
    }
    if let Some(e) = last_err {
        return Err(e);
    }
    if groups.values().any(|ks| policy_satisfied(&ct.policy, &live_attrs(ks, true))) {
        return Err(AbeError::KeyExpired);
    }
    // A cross-gid union is combined for real; the omega terms do not cancel.
    let _ = try_mixed_combination(keys, ct, now);
    Err(AbeError::PolicyNotSatisfied)
}

/// Diagnostic: run the cross-gid combination directly and report whether the
/// body authenticated. Used by collusion tests.
pub fn try_mixed_combination(keys: &[UserAbeKey], ct: &AbeCiphertext, now: Timestamp) -> Result<Vec<u8>, AbeError> {
    let mixed = |a: &Attribute| {
        keys.iter().filter(|k| k.is_valid_at(now)).find_map(|k| k.share(a).map(|s| (s, gid_scalar(&k.user_gid))))
    };
    open_with(ct, &mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    const DAY: Duration = Duration::from_secs(86_400);

    fn attrs(items: &[&str]) -> AttributeSet {
        items.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn duplicate_authority_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut reg = AuthorityRegistry::new();
        authority_setup(&mut reg, "campus", &["staff"], &mut rng).unwrap();
        assert_eq!(
            authority_setup(&mut reg, "campus", &["staff"], &mut rng).unwrap_err(),
            AbeError::DuplicateAuthority("campus".into())
        );
    }

    #[test]
    fn independent_authorities_have_independent_secrets() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut reg = AuthorityRegistry::new();
        let a = authority_setup(&mut reg, "a", &["x"], &mut rng).unwrap().master_secret().to_owned();
        let b = authority_setup(&mut reg, "b", &["x"], &mut rng).unwrap().master_secret().to_owned();
        assert_ne!(a, b);
        assert_ne!(reg.get("a").unwrap().public.attributes["x"], reg.get("b").unwrap().public.attributes["x"]);
    }

    #[test]
    fn public_params_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut reg = AuthorityRegistry::new();
        let pp = authority_setup(&mut reg, "campus", &["staff", "floor3"], &mut rng).unwrap().public_params().clone();
        assert_eq!(AuthorityPublicParams::from_bytes(&pp.to_bytes()).unwrap(), pp);
    }

    #[test]
    fn foreign_and_unknown_attributes_rejected_at_keygen() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut reg = AuthorityRegistry::new();
        let auth = authority_setup(&mut reg, "campus", &["staff"], &mut rng).unwrap();
        assert!(matches!(keygen(auth, "u", &attrs(&["city:staff"]), Timestamp::ZERO, DAY), Err(AbeError::ForeignAttribute(_))));
        assert!(matches!(keygen(auth, "u", &attrs(&["campus:dean"]), Timestamp::ZERO, DAY), Err(AbeError::UnknownAttribute(_))));
        assert_eq!(keygen(auth, "u", &attrs(&["campus:staff"]), Timestamp::ZERO, Duration::ZERO).unwrap_err(), AbeError::InvalidValidity);
    }

    #[test]
    fn single_leaf_round_trip_and_unsatisfied_and() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut reg = AuthorityRegistry::new();
        let auth = authority_setup(&mut reg, "c", &["a", "b"], &mut rng).unwrap();
        let k = keygen(auth, "alice", &attrs(&["c:a"]), Timestamp::ZERO, DAY).unwrap();
        let pp = reg.public_params();
        let ct = encrypt(&pp, &"c:a".parse().unwrap(), b"nonce", &mut rng).unwrap();
        assert_eq!(decrypt(std::slice::from_ref(&k), &ct, Timestamp::from_secs(1)).unwrap(), b"nonce");
        let ct = encrypt(&pp, &"AND(c:a, c:b)".parse().unwrap(), b"nonce", &mut rng).unwrap();
        assert_eq!(decrypt(&[k], &ct, Timestamp::from_secs(1)).unwrap_err(), AbeError::PolicyNotSatisfied);
    }

    #[test]
    fn encrypt_needs_registered_authority_and_attribute() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut reg = AuthorityRegistry::new();
        authority_setup(&mut reg, "c", &["a"], &mut rng).unwrap();
        let pp = reg.public_params();
        assert!(matches!(encrypt(&pp, &"d:a".parse().unwrap(), b"x", &mut rng), Err(AbeError::UnknownAuthority(_))));
        assert!(matches!(encrypt(&pp, &"c:z".parse().unwrap(), b"x", &mut rng), Err(AbeError::UnknownAttribute(_))));
    }

    #[test]
    fn expiry_is_closed_open() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut reg = AuthorityRegistry::new();
        let auth = authority_setup(&mut reg, "c", &["a"], &mut rng).unwrap();
        let k = keygen(auth, "alice", &attrs(&["c:a"]), Timestamp::ZERO, DAY).unwrap();
        let ct = encrypt(&reg.public_params(), &"c:a".parse().unwrap(), b"n", &mut rng).unwrap();
        let last = Timestamp::from_micros(DAY.as_micros() as u64 - 1);
        assert!(decrypt(std::slice::from_ref(&k), &ct, last).is_ok());
        assert_eq!(decrypt(&[k], &ct, Timestamp::ZERO + DAY).unwrap_err(), AbeError::KeyExpired);
    }

    #[test]
    fn ciphertext_codec_round_trip_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut reg = AuthorityRegistry::new();
        let auth = authority_setup(&mut reg, "c", &["a", "b", "d"], &mut rng).unwrap();
        let k = keygen(auth, "alice", &attrs(&["c:a", "c:d"]), Timestamp::ZERO, DAY).unwrap();
        let ct = encrypt(&reg.public_params(), &"THRESHOLD(2, c:a, c:b, c:d)".parse().unwrap(), b"n", &mut rng).unwrap();
        let bytes = ct.to_bytes();
        let back = AbeCiphertext::from_bytes(&bytes).unwrap();
        assert_eq!(back, ct);
        // Flip a bit inside the first E point's x coordinate.
        let leaf0 = bytes.len() - (2 + ct.body.len()) - 3 * (1 + 3 * POINT_LEN);
        let mut bad = bytes.clone();
        bad[leaf0 + 1 + POINT_LEN + 10] ^= 1;
        match AbeCiphertext::from_bytes(&bad) {
            Ok(t) => assert_eq!(decrypt(std::slice::from_ref(&k), &t, Timestamp::ZERO).unwrap_err(), AbeError::DecryptFailed),
            Err(e) => assert!(matches!(e, AbeError::Malformed(_))),
        }
        assert!(AbeCiphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn user_key_serde_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut reg = AuthorityRegistry::new();
        let auth = authority_setup(&mut reg, "c", &["a"], &mut rng).unwrap();
        let k = keygen(auth, "alice", &attrs(&["c:a"]), Timestamp::ZERO, DAY).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<UserAbeKey>(&json).unwrap(), k);
        let reg_json = serde_json::to_string(&reg).unwrap();
        let reg2: AuthorityRegistry = serde_json::from_str(&reg_json).unwrap();
        assert_eq!(reg2.public_params(), reg.public_params());
    }
}
