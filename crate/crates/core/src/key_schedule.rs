//! Derived keys and authentication payloads.
//!
//! Every composition uses its own ASCII domain tag; byte layouts are pinned
//! and mirrored by the `vectors` output.

use std::time::Duration;

use rand_core::CryptoRngCore;
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::crypto::{
    dec_plain, dh, enc_plain, prf_parts, prf_plus_parts, CryptoError, GroupPoint, GroupScalar, SymmetricKey, NONCE_LEN,
};
use crate::time::Timestamp;

pub const ROLE_INITIATOR: u8 = 0x49;
pub const ROLE_RESPONDER: u8 = 0x52;
pub const SK_MATERIAL_LEN: usize = 192;
pub const ANONYMOUS_ID_TAG: &[u8] = &[0x00];
pub const LTK_TTL: Duration = Duration::from_secs(3600);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub const fn octet(self) -> u8 {
        match self {
            Role::Initiator => ROLE_INITIATOR,
            Role::Responder => ROLE_RESPONDER,
        }
    }

    pub const fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyScheduleError {
    #[error("shared secret is the identity point")]
    IdentitySharedSecret,
    #[error("mapped generator GE is the identity point")]
    DegenerateGE,
    #[error("peer point is invalid")]
    InvalidPeerPoint,
    #[error("SPIs must be nonzero and distinct")]
    InvalidIds,
}

impl From<CryptoError> for KeyScheduleError {
    fn from(_: CryptoError) -> Self {
        KeyScheduleError::InvalidPeerPoint
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SessionIds {
    pub spi_i: [u8; 8],
    pub spi_r: [u8; 8],
}

impl SessionIds {
    pub fn new(spi_i: [u8; 8], spi_r: [u8; 8]) -> Result<Self, KeyScheduleError> {
        if spi_i == [0; 8] || spi_r == [0; 8] || spi_i == spi_r {
            return Err(KeyScheduleError::InvalidIds);
        }
        Ok(SessionIds { spi_i, spi_r })
    }

    pub fn octets(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.spi_i);
        out[8..].copy_from_slice(&self.spi_r);
        out
    }
}

/// A fresh nonzero SPI.
pub fn random_spi(rng: &mut impl CryptoRngCore) -> [u8; 8] {
    loop {
        let mut spi = [0u8; 8];
        rng.fill_bytes(&mut spi);
        if spi != [0; 8] {
            return spi;
        }
    }
}

pub fn random_nonce(rng: &mut impl CryptoRngCore) -> [u8; 32] {
    loop {
        let mut n = [0u8; 32];
        rng.fill_bytes(&mut n);
        if n != [0; 32] {
            return n;
        }
    }
}

fn nonce_key(n_i: &[u8; 32], n_r: &[u8; 32]) -> [u8; 64] {
    let mut k = [0u8; 64];
    k[..32].copy_from_slice(n_i);
    k[32..].copy_from_slice(n_r);
    k
}

/// `keyseed = prf(n_i || n_r, enc(shared))`.
pub fn compute_keyseed(shared: &GroupPoint, n_i: &[u8; 32], n_r: &[u8; 32]) -> Result<[u8; 32], KeyScheduleError> {
    if shared.is_identity() {
        return Err(KeyScheduleError::IdentitySharedSecret);
    }
    let mut key = nonce_key(n_i, n_r);
    let out = prf_parts(&key, &[&shared.encode()]);
    key.zeroize();
    Ok(out)
}

/// The six directional session keys.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct KeySchedule {
    pub keyseed: [u8; 32],
    pub sk_ei: SymmetricKey,
    pub sk_ai: SymmetricKey,
    pub sk_er: SymmetricKey,
    pub sk_ar: SymmetricKey,
    pub sk_pi: SymmetricKey,
    pub sk_pr: SymmetricKey,
}

impl std::fmt::Debug for KeySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeySchedule(fp={})", crate::crypto::fingerprint(&self.keyseed))
    }
}

impl KeySchedule {
    /// Encryption and integrity keys used by `sender`.
    pub fn send_keys(&self, sender: Role) -> (&SymmetricKey, &SymmetricKey) {
        match sender {
            Role::Initiator => (&self.sk_ei, &self.sk_ai),
            Role::Responder => (&self.sk_er, &self.sk_ar),
        }
    }

    pub fn sk_p(&self, role: Role) -> &SymmetricKey {
        match role {
            Role::Initiator => &self.sk_pi,
            Role::Responder => &self.sk_pr,
        }
    }

    pub fn all_keys(&self) -> [&SymmetricKey; 6] {
        [&self.sk_ei, &self.sk_ai, &self.sk_er, &self.sk_ar, &self.sk_pi, &self.sk_pr]
    }
}

/// `prf+(keyseed, n_i || n_r || spi_i || spi_r)` sliced as ei, ai, er, ar, pi, pr.
pub fn derive_sks(keyseed: &[u8; 32], n_i: &[u8; 32], n_r: &[u8; 32], ids: &SessionIds) -> KeySchedule {
    let data = [&n_i[..], n_r, &ids.octets()].concat();
    let mut m = prf_plus_parts(keyseed, &data, SK_MATERIAL_LEN).expect("192 is within the prf+ bound");
    let k = |i: usize| SymmetricKey::from_slice(&m[i * 32..(i + 1) * 32]).expect("32-octet slice");
    let ks = KeySchedule { keyseed: *keyseed, sk_ei: k(0), sk_ai: k(1), sk_er: k(2), sk_ar: k(3), sk_pi: k(4), sk_pr: k(5) };
    m.zeroize();
    ks
}

/// `transcript || peer_nonce || prf(sk_p, id_payload or 0x00)`.
pub fn build_signed_octets(transcript: &[u8], id_payload: Option<&[u8]>, sk_p: &SymmetricKey, peer_nonce: &[u8; 32]) -> Vec<u8> {
    let mac = prf_parts(sk_p.as_bytes(), &[id_payload.unwrap_or(ANONYMOUS_ID_TAG)]);
    [transcript, peer_nonce, &mac].concat()
}

/// `prf(prf(n_b, "LOCATHE-T1" || role || n_i || n_r), signed_octets || enc(ke_r))`.
pub fn compute_auth_tier1(
    role: Role,
    n_b: &[u8; 32],
    n_i: &[u8; 32],
    n_r: &[u8; 32],
    ke_r: &GroupPoint,
    signed_octets: &[u8],
) -> [u8; 32] {
    let mut inner = prf_parts(n_b, &[b"LOCATHE-T1", &[role.octet()], n_i, n_r]);
    let out = prf_parts(&inner, &[signed_octets, &ke_r.encode()]);
    inner.zeroize();
    out
}

/// `kpwd = prf(spwd, n_i || n_r || spi_i || spi_r)`.
pub fn derive_kpwd(spwd: &[u8; 32], n_i: &[u8; 32], n_r: &[u8; 32], ids: &SessionIds) -> SymmetricKey {
    SymmetricKey::from_bytes(prf_parts(spwd, &[n_i, n_r, &ids.octets()]))
}

/// `ENONCE = enc_plain(kpwd, nonce12, enc(s))`; no MAC by design.
pub fn make_enonce(kpwd: &SymmetricKey, s: &GroupScalar, nonce12: &[u8; NONCE_LEN]) -> Vec<u8> {
    let mut sb = s.to_bytes();
    let out = enc_plain(kpwd, nonce12, &sb);
    sb.zeroize();
    out
}

/// Total inverse of [`make_enonce`]: any key and any 32 octets yield a scalar.
pub fn open_enonce(kpwd: &SymmetricKey, nonce12: &[u8; NONCE_LEN], enonce: &[u8]) -> GroupScalar {
    let mut pt = dec_plain(kpwd, nonce12, enonce);
    let mut arr = [0u8; 32];
    let n = pt.len().min(32);
    arr[32 - n..].copy_from_slice(&pt[pt.len() - n..]);
    pt.zeroize();
    let s = crate::crypto::scalar_from_prf(&arr);
    arr.zeroize();
    s
}

/// `GE = s*G + shared`.
pub fn compute_ge(s: &GroupScalar, shared: &GroupPoint) -> Result<GroupPoint, KeyScheduleError> {
    if shared.is_identity() {
        return Err(KeyScheduleError::IdentitySharedSecret);
    }
    let ge = s.public_point().add(shared);
    if ge.is_identity() {
        return Err(KeyScheduleError::DegenerateGE);
    }
    Ok(ge)
}

/// Tier 1 has no ENONCE; its final stage maps GE from a scalar bound to n_b.
pub fn tier1_ge_scalar(n_b: &[u8; 32], n_i: &[u8; 32], n_r: &[u8; 32]) -> GroupScalar {
    crate::crypto::scalar_from_prf(&prf_parts(n_b, &[b"LOCATHE-T1-GE", n_i, n_r]))
}

/// `(lsk, lsk * ge)`.
pub fn tier2_keypair(ge: &GroupPoint, rng: &mut impl CryptoRngCore) -> (GroupScalar, GroupPoint) {
    let lsk = GroupScalar::random(rng);
    let lpk = ge.mul(&lsk);
    (lsk, lpk)
}

/// `prf(prf(n_b, "LOCATHE-T2"), transcript || prf(sk_p, "LOCATHE-T2"))`.
pub fn compute_auth_tier2(n_b: &[u8; 32], transcript: &[u8], sk_p: &SymmetricKey) -> [u8; 32] {
    let mut inner = prf_parts(n_b, &[b"LOCATHE-T2"]);
    let skp_mac = prf_parts(sk_p.as_bytes(), &[b"LOCATHE-T2"]);
    let out = prf_parts(&inner, &[transcript, &skp_mac]);
    inner.zeroize();
    out
}

/// `my_lsk * peer_lpk`.
pub fn compute_auth_shared_secret(my_lsk: &GroupScalar, peer_lpk: &GroupPoint) -> Result<GroupPoint, KeyScheduleError> {
    Ok(dh(my_lsk, peer_lpk)?)
}

/// `GTK = prf(enc(ge), tk)`.
pub fn compute_gtk(ge: &GroupPoint, tk: &str) -> [u8; 32] {
    prf_parts(&ge.encode(), &[tk.as_bytes()])
}

/// `prf(prf(enc(auth_shared), gtk || role), signed_octets)`.
pub fn compute_final_auth(role: Role, signed_octets: &[u8], auth_shared: &GroupPoint, gtk: &[u8; 32]) -> [u8; 32] {
    let mut inner = prf_parts(&auth_shared.encode(), &[gtk, &[role.octet()]]);
    let out = prf_parts(&inner, &[signed_octets]);
    inner.zeroize();
    out
}

/// Post-handshake key, valid on `[created_at, created_at + 3600 s)`.
#[derive(Clone, PartialEq, Eq)]
pub struct LongTermSecret {
    key: [u8; 32],
    pub created_at: Timestamp,
    pub ttl_seconds: u64,
}

impl Drop for LongTermSecret {
    fn drop(&mut self) {
        self.key.zeroize();
    }
}

impl std::fmt::Debug for LongTermSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LongTermSecret(fp={}, created_at={})", self.fingerprint(), self.created_at)
    }
}

impl LongTermSecret {
    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn expires_at(&self) -> Timestamp {
        self.created_at + Duration::from_secs(self.ttl_seconds)
    }

    pub fn is_valid(&self, now: Timestamp) -> bool {
        self.created_at <= now && now < self.expires_at()
    }

    pub fn fingerprint(&self) -> String {
        crate::crypto::fingerprint(&self.key)
    }
}

/// `prf(enc(auth_shared), "LOCATHE-LTK" || n_i || n_r || spi_i || spi_r)`.
pub fn compute_long_term_secret(
    auth_shared: &GroupPoint,
    n_i: &[u8; 32],
    n_r: &[u8; 32],
    ids: &SessionIds,
    now: Timestamp,
) -> LongTermSecret {
    let key = prf_parts(&auth_shared.encode(), &[b"LOCATHE-LTK", n_i, n_r, &ids.octets()]);
    LongTermSecret { key, created_at: now, ttl_seconds: LTK_TTL.as_secs() }
}

/// Per-session Tier 2 material. `s` and `lsk` are wiped on drop.
#[derive(Clone)]
pub struct Tier2State {
    pub spwd: [u8; 32],
    pub kpwd: SymmetricKey,
    pub s: GroupScalar,
    pub ge: GroupPoint,
    pub lsk: GroupScalar,
    pub lpk: GroupPoint,
}

impl Drop for Tier2State {
    fn drop(&mut self) {
        self.spwd.zeroize();
    }
}

impl std::fmt::Debug for Tier2State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tier2State").field("ge", &self.ge).field("lpk", &self.lpk).finish_non_exhaustive()
    }
}

impl Tier2State {
    /// Assemble from a known `s`; the caller is either the initiator (fresh
    /// `s`) or the responder (`s` opened from ENONCE).
    pub fn new(
        spwd: &[u8; 32],
        kpwd: SymmetricKey,
        s: GroupScalar,
        shared: &GroupPoint,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Self, KeyScheduleError> {
        let ge = compute_ge(&s, shared)?;
        let (lsk, lpk) = tier2_keypair(&ge, rng);
        Ok(Tier2State { spwd: *spwd, kpwd, s, ge, lsk, lpk })
    }
}
