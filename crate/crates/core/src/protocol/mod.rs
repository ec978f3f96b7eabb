//! Wire messages, beacon lifecycle and the two endpoint state machines.
//!
//! Endpoints are sans-io: they consume octets plus an explicit `now` and
//! return the octets to emit. Scheduling, delivery and timeouts belong to the
//! caller (the simulator or the CLI demo loop).

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::crypto::{GroupPoint, GroupScalar, SymmetricKey};

pub mod beacon;
pub mod initiator;
pub mod responder;
pub mod wire;

pub use beacon::{beacon_tick, fetch_bnonce, nb_window_check, BeaconConfig, BeaconError, BroadcastRecord};
pub use initiator::{InitiatorSession, UserAgent};
pub use responder::{ResponderSession, ServiceAgent};
pub use wire::{Advert, ErrorClass, Header, MsgType, ProtocolMessage, WireError, WireMessage};

/// Either endpoint gives up on an awaited response after this long.
pub const RESPONSE_TIMEOUT: Duration = Duration::from_secs(5);

/// Every auth-class ERROR at the Tier 2 step leaves after this fixed delay,
/// so an unknown user is indistinguishable from a bad AUTH_TIER2.
pub const TIER2_ERROR_DELAY: Duration = Duration::from_millis(250);

/// The only additional factor the engine mechanizes.
pub const FACTOR_TOKEN: &[u8] = b"TOKEN";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "both")]
    Both,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::One, Tier::Two, Tier::Both];

    pub fn octet(self) -> u8 {
        match self {
            Tier::One => 1,
            Tier::Two => 2,
            Tier::Both => 3,
        }
    }

    pub fn from_octet(v: u8) -> Option<Self> {
        match v {
            1 => Some(Tier::One),
            2 => Some(Tier::Two),
            3 => Some(Tier::Both),
            _ => None,
        }
    }

    pub fn runs_tier1(self) -> bool {
        matches!(self, Tier::One | Tier::Both)
    }

    pub fn runs_tier2(self) -> bool {
        matches!(self, Tier::Two | Tier::Both)
    }

    /// Request/response pairs after the fetch: KE, one per tier, FINAL.
    pub fn exchange_pairs(self) -> usize {
        match self {
            Tier::One | Tier::Two => 3,
            Tier::Both => 4,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::One => "1",
            Tier::Two => "2",
            Tier::Both => "both",
        })
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(Tier::One),
            "2" => Ok(Tier::Two),
            "both" | "1+2" => Ok(Tier::Both),
            other => Err(format!("unknown tier `{other}` (expected 1, 2 or both)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    AwaitBroadcast,
    AwaitFetch,
    AwaitKe,
    AwaitT1,
    AwaitT2,
    AwaitFinal,
    Established,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Established | Phase::Failed)
    }

    /// Coarse stage name used in CLI output.
    pub fn stage(self) -> &'static str {
        match self {
            Phase::AwaitBroadcast | Phase::AwaitFetch => "broadcast",
            Phase::AwaitKe => "ke",
            Phase::AwaitT1 => "tier1",
            Phase::AwaitT2 => "tier2",
            Phase::AwaitFinal => "final",
            Phase::Established => "established",
            Phase::Failed => "failed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    BadSignature,
    CertificateMismatch,
    PolicyNotSatisfied,
    MalformedMessage,
    DecryptFailed,
    AuthMismatch,
    AuthTier2Mismatch,
    UnknownUser,
    MissingFactor,
    FinalAuthFailed,
    #[serde(rename = "degenerate_ge")]
    DegenerateGE,
    Timeout,
    PeerError,
}

impl FailureReason {
    /// Class carried in the ERROR sent to the peer, if any is sent.
    pub fn error_class(self) -> Option<ErrorClass> {
        use FailureReason::*;
        match self {
            MalformedMessage | DecryptFailed => Some(ErrorClass::Protocol),
            BadSignature | CertificateMismatch | AuthMismatch | AuthTier2Mismatch | UnknownUser | MissingFactor
            | FinalAuthFailed => Some(ErrorClass::Auth),
            DegenerateGE => Some(ErrorClass::Internal),
            PolicyNotSatisfied | Timeout | PeerError => None,
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub reason: FailureReason,
    /// Phase the session was in when it failed.
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Process,
    Ignore,
    Reject,
}

/// Counter rule shared by both roles: unknown session rejects without
/// creating state, a counter at or below the high-water mark is a duplicate,
/// and gaps are tolerated.
pub fn on_duplicate_or_stale(session_known: bool, high_water: u32, counter: u32) -> Disposition {
    if !session_known {
        Disposition::Reject
    } else if counter <= high_water {
        Disposition::Ignore
    } else {
        Disposition::Process
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub bytes: Vec<u8>,
    /// Hold the message this long before putting it on the medium.
    pub delay: Duration,
}

impl Outgoing {
    pub fn now(bytes: Vec<u8>) -> Self {
        Outgoing { bytes, delay: Duration::ZERO }
    }
}

/// Result of feeding one input to an endpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub disposition: Disposition,
    pub outgoing: Vec<Outgoing>,
}

impl Step {
    pub fn process(outgoing: Vec<Outgoing>) -> Self {
        Step { disposition: Disposition::Process, outgoing }
    }

    pub fn ignore() -> Self {
        Step { disposition: Disposition::Ignore, outgoing: Vec::new() }
    }

    pub fn reject() -> Self {
        Step { disposition: Disposition::Reject, outgoing: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    #[serde(rename = "type")]
    pub msg_type: MsgType,
    #[serde(with = "hex_bytes")]
    pub hex: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// `[{direction, type, hex}, ...]`.
pub fn transcript_json(entries: &[TranscriptEntry]) -> String {
    serde_json::to_string_pretty(entries).expect("transcript serializes")
}

/// Ground-truth values a session would otherwise erase. Off by default; the
/// simulator enables it to check secrecy properties.
#[derive(Clone, Debug, Default)]
pub struct AuditRecord {
    pub n_b: Option<[u8; 32]>,
    pub ephemeral: Option<GroupScalar>,
    pub shared: Option<GroupPoint>,
    pub kpwd: Option<SymmetricKey>,
    pub s: Option<GroupScalar>,
    pub lsk: Option<GroupScalar>,
    pub tk: Option<String>,
    pub gtk: Option<[u8; 32]>,
}
