//! Broadcast lifecycle: N_b regeneration, the ABE-wrapped BNONCE, its
//! signature, the advert and the fetch that delivers the full BNONCE.

use std::time::Duration;

use rand_core::CryptoRngCore;
use thiserror::Error;
use zeroize::Zeroize;

use super::wire::{Advert, Header, MsgType, ProtocolMessage};
use crate::abe::{self, AbeCiphertext, AbeError, AccessPolicy, PublicParams};
use crate::crypto::{Signature, SigningKey};
use crate::registration::ServiceCertificate;
use crate::time::Timestamp;

/// 1 TU = 1024 µs.
pub const TIME_UNIT: Duration = Duration::from_micros(1024);
/// 100 TU = 102.4 ms.
pub const DEFAULT_BROADCAST_INTERVAL: Duration = Duration::from_micros(100 * 1024);
pub const DEFAULT_NB_VALIDITY: Duration = Duration::from_secs(10);
/// Floor on retained records; the actual depth also covers a full window.
pub const MIN_RETAINED_RECORDS: usize = 4;
pub const NB_RANDOM_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeaconError {
    #[error("broadcast interval must be positive")]
    ZeroInterval,
    #[error("validity window shorter than the broadcast interval")]
    WindowTooShort,
    #[error("unknown or expired fetch handle")]
    UnknownHandle,
    #[error("malformed fetch request")]
    Malformed,
    #[error(transparent)]
    Abe(#[from] AbeError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeaconConfig {
    pub beacon_id: [u8; 8],
    pub location_id: String,
    pub broadcast_interval: Duration,
    pub nb_validity: Duration,
    pub policy: AccessPolicy,
}

impl BeaconConfig {
    pub fn new(beacon_id: [u8; 8], location_id: &str, policy: AccessPolicy) -> Self {
        BeaconConfig {
            beacon_id,
            location_id: location_id.to_string(),
            broadcast_interval: DEFAULT_BROADCAST_INTERVAL,
            nb_validity: DEFAULT_NB_VALIDITY,
            policy,
        }
    }

    pub fn validate(&self) -> Result<(), BeaconError> {
        if self.broadcast_interval.is_zero() {
            return Err(BeaconError::ZeroInterval);
        }
        if self.nb_validity < self.broadcast_interval {
            return Err(BeaconError::WindowTooShort);
        }
        Ok(())
    }

    /// `max(4, ceil(d / interval) + 1)`: a handle fetched at any point of its
    /// window is still resolvable when the AUTH step arrives.
    pub fn retained_records(&self) -> usize {
        let d = self.nb_validity.as_micros();
        let i = self.broadcast_interval.as_micros().max(1);
        MIN_RETAINED_RECORDS.max(d.div_ceil(i) as usize + 1)
    }
}

/// One regeneration of N_b. `n_b = random_24 || beacon_id_8`.
#[derive(Clone)]
pub struct BroadcastRecord {
    n_b: [u8; 32],
    pub handle: [u8; 8],
    pub bnonce: AbeCiphertext,
    pub bnonce_bytes: Vec<u8>,
    pub signature: Signature,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl Drop for BroadcastRecord {
    fn drop(&mut self) {
        self.n_b.zeroize();
    }
}

impl std::fmt::Debug for BroadcastRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BroadcastRecord")
            .field("handle", &hex::encode(self.handle))
            .field("issued_at", &self.issued_at)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

impl BroadcastRecord {
    pub fn n_b(&self) -> &[u8; 32] {
        &self.n_b
    }

    pub fn beacon_id(&self) -> [u8; 8] {
        self.n_b[NB_RANDOM_LEN..].try_into().expect("8-octet suffix")
    }

    /// The canonical BNONCE_FETCH_RESP for this record. Both endpoints fold
    /// these exact octets into the responder transcript.
    pub fn fetch_response(&self, cert: &ServiceCertificate) -> ProtocolMessage {
        ProtocolMessage::new(
            Header::new(MsgType::BnonceFetchResp, [0; 8], [0; 8], 0),
            vec![self.handle.to_vec(), self.bnonce_bytes.clone(), self.signature.to_bytes().to_vec(), cert.to_bytes()],
        )
    }
}

/// Valid iff `issued_at <= now < issued_at + d`.
pub fn nb_window_check(record: &BroadcastRecord, now: Timestamp) -> bool {
    record.issued_at <= now && now < record.expires_at
}

pub fn beacon_tick(
    cfg: &BeaconConfig,
    signing_key: &SigningKey,
    pp: &PublicParams,
    now: Timestamp,
    rng: &mut impl CryptoRngCore,
) -> Result<(Advert, BroadcastRecord), BeaconError> {
    cfg.validate()?;
    let mut n_b = [0u8; 32];
    rng.fill_bytes(&mut n_b[..NB_RANDOM_LEN]);
    n_b[NB_RANDOM_LEN..].copy_from_slice(&cfg.beacon_id);
    let mut handle = [0u8; 8];
    rng.fill_bytes(&mut handle);
    let bnonce = abe::encrypt(pp, &cfg.policy, &n_b, rng)?;
    let bnonce_bytes = bnonce.to_bytes();
    let signature = signing_key.sign(&bnonce_bytes);
    let record = BroadcastRecord {
        n_b,
        handle,
        bnonce,
        bnonce_bytes,
        signature,
        issued_at: now,
        expires_at: now + cfg.nb_validity,
    };
    n_b.zeroize();
    Ok((Advert { beacon_id: cfg.beacon_id, handle }, record))
}

/// Answer a BNONCE_FETCH_REQ from the live records.
pub fn fetch_bnonce<'a>(
    records: impl IntoIterator<Item = &'a BroadcastRecord>,
    req: &ProtocolMessage,
    cert: &ServiceCertificate,
    now: Timestamp,
) -> Result<ProtocolMessage, BeaconError> {
    let h = req.header;
    if h.msg_type != MsgType::BnonceFetchReq || h.spi_i != [0; 8] || h.spi_r != [0; 8] || h.counter != 0 {
        return Err(BeaconError::Malformed);
    }
    if req.sections.len() != 1 {
        return Err(BeaconError::Malformed);
    }
    let handle: [u8; 8] = req.sections[0].as_slice().try_into().map_err(|_| BeaconError::Malformed)?;
    records
        .into_iter()
        .find(|r| r.handle == handle && nb_window_check(r, now))
        .map(|r| r.fetch_response(cert))
        .ok_or(BeaconError::UnknownHandle)
}

pub fn fetch_request(handle: [u8; 8]) -> ProtocolMessage {
    ProtocolMessage::new(Header::new(MsgType::BnonceFetchReq, [0; 8], [0; 8], 0), vec![handle.to_vec()])
}
