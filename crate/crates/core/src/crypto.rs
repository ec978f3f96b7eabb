//! Deterministic primitives: prf / prf+, password stretching, P-256 group
//! operations, authenticated and non-authenticated symmetric encryption,
//! ECDSA signatures and the token authenticator.
//!
//! Algorithm identities are pinned, not negotiated:
//!
//! | role            | instantiation                      |
//! |-----------------|------------------------------------|
//! | prf             | HMAC-SHA-256                       |
//! | prf+            | IKEv2 iteration over prf           |
//! | KDF             | PBKDF2-HMAC-SHA-256, 32 octets     |
//! | group           | NIST P-256 ([`CURVE_ID`])          |
//! | enc_auth        | ChaCha20-Poly1305                  |
//! | enc_plain       | ChaCha20 keystream, no MAC         |
//! | signatures      | ECDSA P-256 / SHA-256 (RFC 6979)   |
//! | token           | TOTP-style truncation of prf       |
//!
//! Every function that needs randomness takes it as an argument. Callers own
//! the generator; a generator shared between threads must be serialized by
//! the caller (`&mut` access enforces this).

use std::fmt;

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use hmac::{Hmac, Mac};
use p256::ecdsa::signature::{Signer, Verifier};
use p256::elliptic_curve::ff::PrimeField;
use p256::elliptic_curve::group::Group;
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::{AffinePoint, EncodedPoint, FieldBytes, NonZeroScalar, ProjectivePoint, Scalar, U256};
use rand_core::CryptoRngCore;
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::time::Timestamp;

type HmacSha256 = Hmac<Sha256>;

/// Registered identifier of the pinned curve.
pub const CURVE_ID: &str = "P-256";
/// Registered identifier of the pinned prf / prf+ pair.
pub const PRF_ID: &str = "HMAC-SHA-256";
pub const PRF_OUTPUT_LEN: usize = 32;
pub const PRF_PLUS_MAX: usize = 255 * PRF_OUTPUT_LEN;
pub const DEFAULT_KDF_ITERATIONS: u32 = 10_000;
/// Compressed SEC1 width; the identity is encoded as 33 zero octets.
pub const POINT_LEN: usize = 33;
pub const SCALAR_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("prf key must be 1..=64 octets, got {0}")]
    InvalidKeyLength(usize),
    #[error("prf+ output of {requested} octets exceeds the {max} octet limit")]
    LengthTooLarge { requested: usize, max: usize },
    #[error("kdf secret is empty")]
    EmptySecret,
    #[error("kdf iteration count must be positive")]
    ZeroIterations,
    #[error("invalid group point encoding")]
    InvalidPoint,
    #[error("peer point is the identity or not on the curve")]
    InvalidPeerPoint,
    #[error("scalar encoding is zero or not reduced")]
    InvalidScalar,
    #[error("authenticated decryption failed")]
    AuthenticationFailed,
    #[error("malformed signature")]
    MalformedSignature,
    #[error("malformed signing or verifying key")]
    MalformedKey,
    #[error("token seed must be 20..=64 octets, got {0}")]
    InvalidSeedLength(usize),
    #[error("token step must be positive")]
    ZeroStep,
    #[error("token digits must be in 6..=9, got {0}")]
    InvalidDigits(u8),
}

/// Key input of [`prf`] and [`prf_plus`].
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct PrfKey(Vec<u8>);

impl PrfKey {
    pub fn new(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.is_empty() || bytes.len() > 64 {
            return Err(CryptoError::InvalidKeyLength(bytes.len()));
        }
        Ok(PrfKey(bytes.to_vec()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrfKey({} octets)", self.0.len())
    }
}

impl From<&SymmetricKey> for PrfKey {
    fn from(k: &SymmetricKey) -> Self {
        PrfKey(k.0.to_vec())
    }
}

pub fn prf(key: &PrfKey, data: &[u8]) -> [u8; 32] {
    prf_parts(&key.0, &[data])
}

/// prf over the concatenation of `parts`, without materializing it.
///
/// Keys are validated by the public entry points; internal callers only pass
/// fixed-width keys of 32, 33 or 64 octets.
pub(crate) fn prf_parts(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    debug_assert!(!key.is_empty() && key.len() <= 64);
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// IKEv2 prf+: `T1 = prf(K, S | 0x01)`, `Ti = prf(K, T(i-1) | S | i)`.
pub fn prf_plus(key: &PrfKey, data: &[u8], out_len: usize) -> Result<Vec<u8>, CryptoError> {
    prf_plus_parts(&key.0, data, out_len)
}

pub(crate) fn prf_plus_parts(key: &[u8], data: &[u8], out_len: usize) -> Result<Vec<u8>, CryptoError> {
    if out_len > PRF_PLUS_MAX {
        return Err(CryptoError::LengthTooLarge { requested: out_len, max: PRF_PLUS_MAX });
    }
    let mut out = Vec::with_capacity(out_len + PRF_OUTPUT_LEN);
    let mut prev: Option<[u8; 32]> = None;
    let mut counter: u8 = 1;
    while out.len() < out_len {
        let block = match &prev {
            None => prf_parts(key, &[data, &[counter]]),
            Some(t) => prf_parts(key, &[t, data, &[counter]]),
        };
        out.extend_from_slice(&block);
        prev = Some(block);
        counter = counter.wrapping_add(1);
    }
    out.truncate(out_len);
    Ok(out)
}

/// PBKDF2-HMAC-SHA-256 stretching to 32 octets.
pub fn kdf_stretch(secret: &[u8], salt: &[u8], iterations: u32) -> Result<SymmetricKey, CryptoError> {
    if secret.is_empty() {
        return Err(CryptoError::EmptySecret);
    }
    if iterations == 0 {
        return Err(CryptoError::ZeroIterations);
    }
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(secret, salt, iterations, &mut out);
    Ok(SymmetricKey(out))
}

/// A 32-octet symmetric key. Wiped on drop.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; 32]);

impl SymmetricKey {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        Some(SymmetricKey(bytes.try_into().ok()?))
    }

    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey(fp={})", fingerprint(&self.0))
    }
}

/// A non-zero scalar modulo the P-256 group order.
#[derive(Clone, Copy)]
pub struct GroupScalar(NonZeroScalar);

impl PartialEq for GroupScalar {
    fn eq(&self, other: &Self) -> bool {
        bool::from(self.0.ct_eq(&other.0))
    }
}

impl Eq for GroupScalar {}

/// Overwrites with one, keeping the non-zero invariant.
impl Zeroize for GroupScalar {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

impl GroupScalar {
    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        GroupScalar(NonZeroScalar::random(rng))
    }

    /// Canonical 32-octet big-endian decoding; rejects zero and values >= order.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidScalar)?;
        let s: Option<Scalar> = Scalar::from_repr(FieldBytes::from(arr)).into();
        let s = s.ok_or(CryptoError::InvalidScalar)?;
        Option::<NonZeroScalar>::from(NonZeroScalar::new(s))
            .map(GroupScalar)
            .ok_or(CryptoError::InvalidScalar)
    }

    /// Total map from 32 octets to a scalar by reduction modulo the order.
    /// Only the all-zero residue is refused.
    pub fn from_bytes_reduced(bytes: &[u8; 32]) -> Option<Self> {
        let s = <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*bytes));
        Option::<NonZeroScalar>::from(NonZeroScalar::new(s)).map(GroupScalar)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_repr().into()
    }

    pub fn one() -> Self {
        GroupScalar(NonZeroScalar::new(Scalar::ONE).unwrap())
    }

    pub(crate) fn inner(&self) -> Scalar {
        *self.0
    }

    pub fn public_point(&self) -> GroupPoint {
        GroupPoint(ProjectivePoint::GENERATOR * self.inner())
    }
}

impl fmt::Debug for GroupScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GroupScalar(..)")
    }
}

/// A P-256 point. May hold the identity so that decoders can report it;
/// every consumer that needs a public key or shared secret rejects it.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupPoint(ProjectivePoint);

impl GroupPoint {
    pub fn identity() -> Self {
        GroupPoint(ProjectivePoint::IDENTITY)
    }

    pub fn generator() -> Self {
        GroupPoint(ProjectivePoint::GENERATOR)
    }

    pub fn is_identity(&self) -> bool {
        bool::from(self.0.is_identity())
    }

    pub fn encode(&self) -> [u8; POINT_LEN] {
        let mut out = [0u8; POINT_LEN];
        if !self.is_identity() {
            let ep = self.0.to_affine().to_encoded_point(true);
            out.copy_from_slice(ep.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != POINT_LEN {
            return Err(CryptoError::InvalidPoint);
        }
        if bytes.iter().all(|&b| b == 0) {
            return Ok(GroupPoint::identity());
        }
        if bytes[0] != 0x02 && bytes[0] != 0x03 {
            return Err(CryptoError::InvalidPoint);
        }
        let ep = EncodedPoint::from_bytes(bytes).map_err(|_| CryptoError::InvalidPoint)?;
        let p: Option<AffinePoint> = AffinePoint::from_encoded_point(&ep).into();
        p.map(|a| GroupPoint(a.into())).ok_or(CryptoError::InvalidPoint)
    }

    /// Decode and reject the identity in one step.
    pub fn decode_public(bytes: &[u8]) -> Result<Self, CryptoError> {
        let p = Self::decode(bytes).map_err(|_| CryptoError::InvalidPeerPoint)?;
        if p.is_identity() {
            return Err(CryptoError::InvalidPeerPoint);
        }
        Ok(p)
    }

    pub fn mul(&self, s: &GroupScalar) -> GroupPoint {
        GroupPoint(self.0 * s.inner())
    }

    pub fn add(&self, other: &GroupPoint) -> GroupPoint {
        GroupPoint(self.0 + other.0)
    }

    pub fn neg(&self) -> GroupPoint {
        GroupPoint(-self.0)
    }

    pub(crate) fn inner(&self) -> ProjectivePoint {
        self.0
    }

    pub(crate) fn from_inner(p: ProjectivePoint) -> Self {
        GroupPoint(p)
    }
}

impl fmt::Debug for GroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let enc = self.encode();
        write!(f, "GroupPoint({:02x}{:02x}{:02x}{:02x}..)", enc[0], enc[1], enc[2], enc[3])
    }
}

/// Fresh ephemeral keypair: `point = scalar * G`.
pub fn ecdhe_keypair(rng: &mut impl CryptoRngCore) -> (GroupScalar, GroupPoint) {
    let k = GroupScalar::random(rng);
    let p = k.public_point();
    (k, p)
}

pub fn dh(my_scalar: &GroupScalar, peer_point: &GroupPoint) -> Result<GroupPoint, CryptoError> {
    if peer_point.is_identity() {
        return Err(CryptoError::InvalidPeerPoint);
    }
    Ok(peer_point.mul(my_scalar))
}

pub fn enc_auth(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(key.0.as_ref().into());
    cipher
        .encrypt(nonce.into(), Payload { msg: plaintext, aad })
        .expect("chacha20poly1305 encryption is infallible for in-range lengths")
}

pub fn dec_auth(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let cipher = ChaCha20Poly1305::new(key.0.as_ref().into());
    cipher
        .decrypt(nonce.into(), Payload { msg: ciphertext, aad })
        .map_err(|_| CryptoError::AuthenticationFailed)
}

/// Keystream XOR with no integrity tag. Decryption is the same operation and
/// cannot fail: any key yields a same-length candidate plaintext.
pub fn enc_plain(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], plaintext: &[u8]) -> Vec<u8> {
    let mut buf = plaintext.to_vec();
    let mut cipher = chacha20::ChaCha20::new(key.0.as_ref().into(), nonce.into());
    cipher.apply_keystream(&mut buf);
    buf
}

pub fn dec_plain(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], ciphertext: &[u8]) -> Vec<u8> {
    enc_plain(key, nonce, ciphertext)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = bytes.try_into().map_err(|_| CryptoError::MalformedSignature)?;
        p256::ecdsa::Signature::from_slice(&arr).map_err(|_| CryptoError::MalformedSignature)?;
        Ok(Signature(arr))
    }

    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

/// The service's long-term signing key.
#[derive(Clone)]
pub struct SigningKey(p256::ecdsa::SigningKey);

impl SigningKey {
    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        SigningKey(p256::ecdsa::SigningKey::random(rng))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::MalformedKey)?;
        p256::ecdsa::SigningKey::from_bytes(&FieldBytes::from(arr))
            .map(SigningKey)
            .map_err(|_| CryptoError::MalformedKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey(*self.0.verifying_key())
    }

    pub fn sign(&self, data: &[u8]) -> Signature {
        let sig: p256::ecdsa::Signature = self.0.sign(data);
        let mut out = [0u8; SIGNATURE_LEN];
        out.copy_from_slice(&sig.to_bytes());
        Signature(out)
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct VerifyingKey(p256::ecdsa::VerifyingKey);

impl VerifyingKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        p256::ecdsa::VerifyingKey::from_sec1_bytes(bytes)
            .map(VerifyingKey)
            .map_err(|_| CryptoError::MalformedKey)
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        let mut out = [0u8; POINT_LEN];
        out.copy_from_slice(self.0.to_encoded_point(true).as_bytes());
        out
    }

    pub fn verify(&self, data: &[u8], sig: &Signature) -> bool {
        match p256::ecdsa::Signature::from_slice(&sig.0) {
            Ok(s) => self.0.verify(data, &s).is_ok(),
            Err(_) => false,
        }
    }
}

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(f, "VerifyingKey({:02x}{:02x}{:02x}..)", b[0], b[1], b[2])
    }
}

pub fn sign(sk: &SigningKey, data: &[u8]) -> Signature {
    sk.sign(data)
}

pub fn verify(pk: &VerifyingKey, data: &[u8], sig: &Signature) -> bool {
    pk.verify(data, sig)
}

/// Seed, step and width of the token authenticator.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct TokenSeed {
    seed: Vec<u8>,
    step_seconds: u64,
    digits: u8,
}

impl TokenSeed {
    pub const DEFAULT_STEP: u64 = 30;
    pub const DEFAULT_DIGITS: u8 = 8;

    pub fn new(seed: &[u8], step_seconds: u64, digits: u8) -> Result<Self, CryptoError> {
        if !(20..=64).contains(&seed.len()) {
            return Err(CryptoError::InvalidSeedLength(seed.len()));
        }
        if step_seconds == 0 {
            return Err(CryptoError::ZeroStep);
        }
        if !(6..=9).contains(&digits) {
            return Err(CryptoError::InvalidDigits(digits));
        }
        Ok(TokenSeed { seed: seed.to_vec(), step_seconds, digits })
    }

    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        let mut seed = vec![0u8; 32];
        rng.fill_bytes(&mut seed);
        TokenSeed { seed, step_seconds: Self::DEFAULT_STEP, digits: Self::DEFAULT_DIGITS }
    }

    pub fn seed(&self) -> &[u8] {
        &self.seed
    }

    pub fn step_seconds(&self) -> u64 {
        self.step_seconds
    }

    pub fn digits(&self) -> u8 {
        self.digits
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TokenSeedRepr {
    #[serde(with = "crate::b64::bytes")]
    seed: Vec<u8>,
    step_seconds: u64,
    digits: u8,
}

impl serde::Serialize for TokenSeed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TokenSeedRepr { seed: self.seed.clone(), step_seconds: self.step_seconds, digits: self.digits }.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for TokenSeed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = TokenSeedRepr::deserialize(d)?;
        TokenSeed::new(&r.seed, r.step_seconds, r.digits).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for TokenSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenSeed")
            .field("seed", &"..")
            .field("step_seconds", &self.step_seconds)
            .field("digits", &self.digits)
            .finish()
    }
}

/// Token for the epoch containing `now`: dynamic-offset truncation of
/// `prf(seed, floor(now / step) as u64 BE)` to `digits` decimal digits.
pub fn totp(seed: &TokenSeed, now: Timestamp) -> String {
    let epoch = now.as_secs() / seed.step_seconds;
    let mac = prf_parts(&seed.seed, &[&epoch.to_be_bytes()]);
    let offset = (mac[PRF_OUTPUT_LEN - 1] & 0x0f) as usize;
    let code = u32::from_be_bytes([mac[offset], mac[offset + 1], mac[offset + 2], mac[offset + 3]]) & 0x7fff_ffff;
    let modulus = 10u32.pow(seed.digits as u32);
    format!("{:0width$}", code % modulus, width = seed.digits as usize)
}

/// First 8 hex characters of `prf("FP", value)`. Safe to print.
pub fn fingerprint(value: &[u8]) -> String {
    let d = prf_parts(b"FP", &[value]);
    d[..4].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && bool::from(a.ct_eq(b))
}

/// prf output interpreted as a scalar; falls back to one on the zero residue.
pub(crate) fn scalar_from_prf(bytes: &[u8; 32]) -> GroupScalar {
    GroupScalar::from_bytes_reduced(bytes).unwrap_or_else(GroupScalar::one)
}
