//! Out-of-band registration: credential issuance, Spwd precomputation, token
//! seed distribution, expiry and renewal.
//!
//! The service keeps a [`ServiceRegistry`]; the user agent keeps only the
//! [`RegistrationBundle`], which carries `spwd` and never `user_key`.
//!
//! Concurrency: the registry is a plain value. Share it as [`SharedRegistry`]
//! (`Arc<RwLock<_>>`); protocol code takes read locks, and `register_user` /
//! `renew_user` run under the write lock, so a record is never observed half
//! written. There is a single writer at a time by construction.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroize;

use crate::abe::{self, AbeError, AttributeSet, AuthorityRegistry, UserAbeKey};
use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{self, kdf_stretch, CryptoError, SigningKey, TokenSeed, VerifyingKey, DEFAULT_KDF_ITERATIONS, POINT_LEN};
use crate::time::Timestamp;

pub const REGISTRY_FORMAT: &str = "locathe-registry/1";
pub const BUNDLE_FORMAT: &str = "locathe-bundle/1";
pub const DEFAULT_EXPIRY: Duration = Duration::from_secs(15 * 24 * 3600);
pub const SALT_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("user `{0}` already has an active registration")]
    AlreadyRegistered(String),
    #[error("unknown user")]
    UnknownUser,
    /// Internal only; the protocol answers it exactly like `UnknownUser`.
    #[error("registration expired")]
    Expired,
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("registry I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry format: {0}")]
    Format(String),
}

/// Self-asserted service identity sent with Tier 1 and Tier 2 responses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceCertificate {
    pub service_id: String,
    pub public_key: VerifyingKey,
}

impl ServiceCertificate {
    /// `section(service_id) || public_key(33)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_section(self.service_id.as_bytes()).expect("service id fits");
        w.put_raw(&self.public_key.to_bytes());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let id = std::str::from_utf8(r.section()?).map_err(|_| CodecError::Invalid("service id"))?.to_string();
        let pk = VerifyingKey::from_bytes(r.take(POINT_LEN)?).map_err(|_| CodecError::Invalid("service key"))?;
        r.finish()?;
        Ok(ServiceCertificate { service_id: id, public_key: pk })
    }
}

/// `spwd = kdf_stretch(user_key, salt, iterations)`.
pub fn derive_spwd_with(user_key: &[u8; 32], salt: &[u8; SALT_LEN], iterations: u32) -> [u8; 32] {
    *kdf_stretch(user_key, salt, iterations).expect("user_key is non-empty and iterations > 0").as_bytes()
}

pub fn derive_spwd(user_key: &[u8; 32], salt: &[u8; SALT_LEN]) -> [u8; 32] {
    derive_spwd_with(user_key, salt, DEFAULT_KDF_ITERATIONS)
}

#[derive(Clone, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub relying_party_id: Option<String>,
    #[serde(with = "crate::b64::array")]
    user_key: [u8; 32],
    #[serde(with = "crate::b64::array")]
    pub spwd: [u8; 32],
    #[serde(with = "crate::b64::array")]
    pub kdf_salt: [u8; SALT_LEN],
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_salt")]
    pub password_salt: Option<[u8; SALT_LEN]>,
    pub kdf_iterations: u32,
    pub token_seed: TokenSeed,
    pub attributes: AttributeSet,
    pub abe_keys: Vec<UserAbeKey>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

mod opt_salt {
    use super::SALT_LEN;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; SALT_LEN]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => s.serialize_some(&crate::b64::encode(a)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; SALT_LEN]>, D::Error> {
        use serde::de::Error;
        let Some(s) = Option::<String>::deserialize(d)? else { return Ok(None) };
        let v = crate::b64::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map(Some).map_err(|_| D::Error::custom("salt must be 16 octets"))
    }
}

impl Drop for UserRecord {
    fn drop(&mut self) {
        self.user_key.zeroize();
        self.spwd.zeroize();
    }
}

impl std::fmt::Debug for UserRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserRecord")
            .field("user_id", &self.user_id)
            .field("relying_party_id", &self.relying_party_id)
            .field("spwd", &crypto::fingerprint(&self.spwd))
            .field("issued_at", &self.issued_at)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

impl UserRecord {
    pub fn user_key(&self) -> &[u8; 32] {
        &self.user_key
    }

    pub fn is_active(&self, now: Timestamp) -> bool {
        self.issued_at <= now && now < self.expires_at
    }

    fn matches(&self, user_id: &str, rp: Option<&str>) -> bool {
        self.user_id == user_id && self.relying_party_id.as_deref() == rp
    }
}

/// Everything the user agent stores after registration.
#[derive(Clone, Serialize, Deserialize)]
pub struct RegistrationBundle {
    pub format: String,
    pub user_id: String,
    pub relying_party_id: Option<String>,
    #[serde(with = "crate::b64::array")]
    pub spwd: [u8; 32],
    #[serde(with = "crate::b64::array")]
    pub kdf_salt: [u8; SALT_LEN],
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_salt")]
    pub password_salt: Option<[u8; SALT_LEN]>,
    pub kdf_iterations: u32,
    pub token_seed: TokenSeed,
    pub abe_keys: Vec<UserAbeKey>,
    pub service_id: String,
    #[serde(with = "crate::b64::array")]
    pub service_public_key: [u8; POINT_LEN],
    pub curve_id: String,
    pub prf_id: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl Drop for RegistrationBundle {
    fn drop(&mut self) {
        self.spwd.zeroize();
    }
}

impl std::fmt::Debug for RegistrationBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegistrationBundle")
            .field("user_id", &self.user_id)
            .field("spwd", &crypto::fingerprint(&self.spwd))
            .field("service_id", &self.service_id)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

impl RegistrationBundle {
    pub fn service_key(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_bytes(&self.service_public_key)
    }

    /// Recompute spwd from a typed password (password-mode registrations only).
    pub fn spwd_from_password(&self, password: &[u8]) -> Result<[u8; 32], RegistrationError> {
        let salt = self.password_salt.ok_or(RegistrationError::Format("bundle was not issued from a password".into()))?;
        let mut user_key = *kdf_stretch(password, &salt, self.kdf_iterations)?.as_bytes();
        let spwd = derive_spwd_with(&user_key, &self.kdf_salt, self.kdf_iterations);
        user_key.zeroize();
        Ok(spwd)
    }

    /// Parameters are agreed at registration, never negotiated; a bundle for
    /// another suite is unusable.
    pub fn check_suite(&self) -> Result<(), RegistrationError> {
        if self.curve_id != crypto::CURVE_ID || self.prf_id != crypto::PRF_ID {
            return Err(RegistrationError::Format(format!("unsupported suite {}/{}", self.curve_id, self.prf_id)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RegistrationError> {
        let b: RegistrationBundle = serde_json::from_str(s).map_err(|e| RegistrationError::Format(e.to_string()))?;
        if b.format != BUNDLE_FORMAT {
            return Err(RegistrationError::Format(format!("unsupported bundle format `{}`", b.format)));
        }
        b.check_suite()?;
        Ok(b)
    }
}

/// Summary row for listings; carries no secret material.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecordSummary {
    pub user_id: String,
    pub relying_party_id: Option<String>,
    pub attributes: Vec<String>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub active: bool,
}

#[derive(Serialize, Deserialize)]
pub struct ServiceRegistry {
    pub format: String,
    pub service_id: String,
    #[serde(with = "signing_key_b64")]
    signing_key: SigningKey,
    pub authorities: AuthorityRegistry,
    pub expiry_policy_secs: u64,
    pub kdf_iterations: u32,
    records: Vec<UserRecord>,
}

mod signing_key_b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &SigningKey, s: S) -> Result<S::Ok, S::Error> {
        let mut b = k.to_bytes();
        let out = s.serialize_str(&crate::b64::encode(&b));
        b.zeroize();
        out
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SigningKey, D::Error> {
        use serde::de::Error;
        let s = String::deserialize(d)?;
        let mut raw = crate::b64::decode(&s).map_err(D::Error::custom)?;
        let k = SigningKey::from_bytes(&raw).map_err(D::Error::custom);
        raw.zeroize();
        k
    }
}

pub type SharedRegistry = Arc<RwLock<ServiceRegistry>>;

impl std::fmt::Debug for ServiceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceRegistry")
            .field("service_id", &self.service_id)
            .field("records", &self.records.len())
            .finish_non_exhaustive()
    }
}

impl ServiceRegistry {
    pub fn new(service_id: &str, rng: &mut impl CryptoRngCore) -> Self {
        ServiceRegistry {
            format: REGISTRY_FORMAT.to_string(),
            service_id: service_id.to_string(),
            signing_key: SigningKey::random(rng),
            authorities: AuthorityRegistry::new(),
            expiry_policy_secs: DEFAULT_EXPIRY.as_secs(),
            kdf_iterations: DEFAULT_KDF_ITERATIONS,
            records: Vec::new(),
        }
    }

    pub fn into_shared(self) -> SharedRegistry {
        Arc::new(RwLock::new(self))
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.signing_key
    }

    pub fn certificate(&self) -> ServiceCertificate {
        ServiceCertificate { service_id: self.service_id.clone(), public_key: self.signing_key.verifying_key() }
    }

    pub fn expiry_policy(&self) -> Duration {
        Duration::from_secs(self.expiry_policy_secs)
    }

    pub fn setup_authority(&mut self, authority_id: &str, universe: &[&str], rng: &mut impl CryptoRngCore) -> Result<(), AbeError> {
        abe::authority_setup(&mut self.authorities, authority_id, universe, rng).map(|_| ())
    }

    pub fn register_user(
        &mut self,
        user_id: &str,
        attrs: &AttributeSet,
        password: Option<&[u8]>,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Result<RegistrationBundle, RegistrationError> {
        self.register_user_for(user_id, None, attrs, password, now, rng)
    }

    /// Registration scoped to one relying party; `None` is the per-device default.
    pub fn register_user_for(
        &mut self,
        user_id: &str,
        relying_party_id: Option<&str>,
        attrs: &AttributeSet,
        password: Option<&[u8]>,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Result<RegistrationBundle, RegistrationError> {
        if user_id.is_empty() {
            return Err(RegistrationError::Format("empty user id".into()));
        }
        if self.records.iter().any(|r| r.matches(user_id, relying_party_id) && r.is_active(now)) {
            return Err(RegistrationError::AlreadyRegistered(user_id.to_string()));
        }
        let record = self.issue(user_id, relying_party_id, attrs, password, now, rng)?;
        let bundle = self.bundle_for(&record);
        self.records.retain(|r| !r.matches(user_id, relying_party_id));
        self.records.push(record);
        Ok(bundle)
    }

    fn issue(
        &self,
        user_id: &str,
        relying_party_id: Option<&str>,
        attrs: &AttributeSet,
        password: Option<&[u8]>,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Result<UserRecord, RegistrationError> {
        let (user_key, password_salt) = match password {
            None => {
                let mut k = [0u8; 32];
                rng.fill_bytes(&mut k);
                (k, None)
            }
            Some(pw) => {
                let mut salt = [0u8; SALT_LEN];
                rng.fill_bytes(&mut salt);
                (*kdf_stretch(pw, &salt, self.kdf_iterations)?.as_bytes(), Some(salt))
            }
        };
        let mut kdf_salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut kdf_salt);
        let spwd = derive_spwd_with(&user_key, &kdf_salt, self.kdf_iterations);
        let expiry = self.expiry_policy();
        let gid = match relying_party_id {
            Some(rp) => format!("{user_id}@{rp}"),
            None => user_id.to_string(),
        };
        let mut authorities: Vec<&str> = attrs.iter().map(|a| a.authority.as_str()).collect();
        authorities.dedup();
        let abe_keys = authorities
            .into_iter()
            .map(|id| {
                let auth = self.authorities.get(id).ok_or_else(|| AbeError::UnknownAuthority(id.to_string()))?;
                let mine: AttributeSet = attrs.iter().filter(|a| a.authority == id).cloned().collect();
                abe::keygen(auth, &gid, &mine, now, expiry)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(UserRecord {
            user_id: user_id.to_string(),
            relying_party_id: relying_party_id.map(str::to_string),
            user_key,
            spwd,
            kdf_salt,
            password_salt,
            kdf_iterations: self.kdf_iterations,
            token_seed: TokenSeed::random(rng),
            attributes: attrs.clone(),
            abe_keys,
            issued_at: now,
            expires_at: now + expiry,
        })
    }

    fn bundle_for(&self, r: &UserRecord) -> RegistrationBundle {
        RegistrationBundle {
            format: BUNDLE_FORMAT.to_string(),
            user_id: r.user_id.clone(),
            relying_party_id: r.relying_party_id.clone(),
            spwd: r.spwd,
            kdf_salt: r.kdf_salt,
            password_salt: r.password_salt,
            kdf_iterations: r.kdf_iterations,
            token_seed: r.token_seed.clone(),
            abe_keys: r.abe_keys.clone(),
            service_id: self.service_id.clone(),
            service_public_key: self.signing_key.verifying_key().to_bytes(),
            curve_id: crypto::CURVE_ID.to_string(),
            prf_id: crypto::PRF_ID.to_string(),
            issued_at: r.issued_at,
            expires_at: r.expires_at,
        }
    }

    pub fn lookup_user(&self, user_id: &str, now: Timestamp) -> Result<&UserRecord, RegistrationError> {
        self.lookup_user_for(user_id, None, now)
    }

    pub fn lookup_user_for(&self, user_id: &str, relying_party_id: Option<&str>, now: Timestamp) -> Result<&UserRecord, RegistrationError> {
        let r = self
            .records
            .iter()
            .find(|r| r.matches(user_id, relying_party_id))
            .ok_or(RegistrationError::UnknownUser)?;
        if r.is_active(now) {
            Ok(r)
        } else {
            Err(RegistrationError::Expired)
        }
    }

    /// Fresh UserKey, spwd, token seed and ABE keys over the same attributes.
    pub fn renew_user(
        &mut self,
        user_id: &str,
        password: Option<&[u8]>,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Result<RegistrationBundle, RegistrationError> {
        let idx = self.records.iter().position(|r| r.matches(user_id, None)).ok_or(RegistrationError::UnknownUser)?;
        let attrs = self.records[idx].attributes.clone();
        let record = self.issue(user_id, None, &attrs, password, now, rng)?;
        let bundle = self.bundle_for(&record);
        self.records[idx] = record;
        Ok(bundle)
    }

    pub fn list(&self, now: Timestamp) -> Vec<RecordSummary> {
        self.records
            .iter()
            .map(|r| RecordSummary {
                user_id: r.user_id.clone(),
                relying_party_id: r.relying_party_id.clone(),
                attributes: r.attributes.iter().map(|a| a.to_string()).collect(),
                issued_at: r.issued_at,
                expires_at: r.expires_at,
                active: r.is_active(now),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RegistrationError> {
        let r: ServiceRegistry = serde_json::from_str(s).map_err(|e| RegistrationError::Format(e.to_string()))?;
        if r.format != REGISTRY_FORMAT {
            return Err(RegistrationError::Format(format!("unsupported registry format `{}`", r.format)));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, RegistrationError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Write to a sibling temp file, then rename over `path`.
    pub fn save(&self, path: &Path) -> Result<(), RegistrationError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::Attribute;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn registry(rng: &mut ChaCha20Rng) -> ServiceRegistry {
        let mut reg = ServiceRegistry::new("svc", rng);
        reg.kdf_iterations = 16;
        reg.setup_authority("campus", &["staff"], rng).unwrap();
        reg
    }

    fn staff() -> AttributeSet {
        [Attribute::new("campus", "staff")].into_iter().collect()
    }

    #[test]
    fn register_then_lookup_has_fifteen_day_window() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut reg = registry(&mut rng);
        let now = Timestamp::from_secs(1_000);
        reg.register_user("alice", &staff(), None, now, &mut rng).unwrap();
        let r = reg.lookup_user("alice", now).unwrap();
        assert_eq!(r.expires_at - r.issued_at, Duration::from_secs(15 * 86_400));
        assert_eq!(r.spwd, derive_spwd_with(r.user_key(), &r.kdf_salt, r.kdf_iterations));
    }

    #[test]
    fn second_active_registration_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut reg = registry(&mut rng);
        reg.register_user("alice", &staff(), None, Timestamp::ZERO, &mut rng).unwrap();
        assert!(matches!(
            reg.register_user("alice", &staff(), None, Timestamp::from_secs(5), &mut rng),
            Err(RegistrationError::AlreadyRegistered(_))
        ));
        // A different relying party is a separate record.
        reg.register_user_for("alice", Some("door"), &staff(), None, Timestamp::ZERO, &mut rng).unwrap();
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn expiry_boundary_is_closed_open() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut reg = registry(&mut rng);
        reg.register_user("alice", &staff(), None, Timestamp::ZERO, &mut rng).unwrap();
        let end = Timestamp::ZERO + DEFAULT_EXPIRY;
        assert!(reg.lookup_user("alice", Timestamp::from_secs(end.as_secs() - 1)).is_ok());
        assert!(matches!(reg.lookup_user("alice", end), Err(RegistrationError::Expired)));
        assert!(matches!(reg.lookup_user("bob", Timestamp::ZERO), Err(RegistrationError::UnknownUser)));
        // Registering again after expiry replaces the stale record.
        reg.register_user("alice", &staff(), None, end, &mut rng).unwrap();
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn same_password_different_salts_gives_different_spwd() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut reg = registry(&mut rng);
        let a = reg.register_user("a", &staff(), Some(b"p"), Timestamp::ZERO, &mut rng).unwrap();
        let b = reg.register_user("b", &staff(), Some(b"p"), Timestamp::ZERO, &mut rng).unwrap();
        assert_ne!(a.spwd, b.spwd);
        assert_eq!(a.spwd_from_password(b"p").unwrap(), a.spwd);
        assert_ne!(a.spwd_from_password(b"q").unwrap(), a.spwd);
    }

    #[test]
    fn renew_rotates_credentials() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut reg = registry(&mut rng);
        let old = reg.register_user("alice", &staff(), None, Timestamp::ZERO, &mut rng).unwrap();
        let later = Timestamp::ZERO + DEFAULT_EXPIRY + Duration::from_secs(10);
        assert!(reg.lookup_user("alice", later).is_err());
        let new = reg.renew_user("alice", None, later, &mut rng).unwrap();
        assert!(reg.lookup_user("alice", later).is_ok());
        assert_ne!(old.spwd, new.spwd);
        assert_ne!(old.token_seed, new.token_seed);
        assert!(matches!(reg.renew_user("bob", None, later, &mut rng), Err(RegistrationError::UnknownUser)));
    }

    #[test]
    fn registry_json_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut reg = registry(&mut rng);
        reg.register_user("alice", &staff(), Some(b"pw"), Timestamp::ZERO, &mut rng).unwrap();
        let back = ServiceRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back.to_json(), reg.to_json());
        assert_eq!(back.lookup_user("alice", Timestamp::ZERO).unwrap().spwd, reg.lookup_user("alice", Timestamp::ZERO).unwrap().spwd);
        let bad = reg.to_json().replace(REGISTRY_FORMAT, "locathe-registry/9");
        assert!(matches!(ServiceRegistry::from_json(&bad), Err(RegistrationError::Format(_))));
    }

    #[test]
    fn attributes_from_unlinked_authority_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut reg = registry(&mut rng);
        let attrs: AttributeSet = [Attribute::new("city", "x")].into_iter().collect();
        assert!(matches!(
            reg.register_user("alice", &attrs, None, Timestamp::ZERO, &mut rng),
            Err(RegistrationError::Abe(AbeError::UnknownAuthority(_)))
        ));
        assert!(reg.is_empty());
    }

    #[test]
    fn certificate_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let reg = registry(&mut rng);
        let c = reg.certificate();
        assert_eq!(ServiceCertificate::from_bytes(&c.to_bytes()).unwrap(), c);
    }
}
