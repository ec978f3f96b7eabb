//! Scenario description: who stands where, and what Mallory does.
//!
//! Everything here is plain data so a scenario round-trips through JSON.

use locathe::protocol::{MsgType, Tier};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setup {
    pub seed: u64,
    pub locations: Vec<String>,
    /// One authority per entry: `(authority_id, attribute universe)`.
    #[serde(default = "default_authorities")]
    pub authorities: Vec<(String, Vec<String>)>,
    pub registrations: Vec<RegistrationSpec>,
    pub services: Vec<ServiceSpec>,
    pub users: Vec<UserSpec>,
    pub adversary: AdversarySpec,
    /// Hard stop for the virtual clock.
    #[serde(default = "default_max_time_ms")]
    pub max_time_ms: u64,
}

fn default_authorities() -> Vec<(String, Vec<String>)> {
    vec![
        ("campus".into(), vec!["staff".into(), "student".into(), "guest".into()]),
        ("city".into(), vec!["resident".into(), "visitor".into()]),
    ]
}

fn default_max_time_ms() -> u64 {
    60_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationSpec {
    pub user_id: String,
    pub attributes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub location: String,
    /// 16 hex digits.
    pub beacon_id: String,
    pub policy: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub name: String,
    pub user_id: String,
    pub location: String,
    pub tier: Tier,
    /// The radio is on during `[active_from_ms, active_until_ms)`.
    #[serde(default)]
    pub active_from_ms: u64,
    #[serde(default)]
    pub active_until_ms: Option<u64>,
    /// Test hook: run with a wrong stored password.
    #[serde(default)]
    pub wrong_password: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    /// Locations where Mallory hears (and may intercept) every transmission.
    pub locations: Vec<String>,
    /// Secondary-channel latency for Relay.
    #[serde(default = "default_relay_latency_ms")]
    pub relay_latency_ms: u64,
    #[serde(default)]
    pub script: AdversaryScript,
}

fn default_relay_latency_ms() -> u64 {
    20
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryScript {
    /// First matching rule decides; an unmatched message is forwarded.
    #[serde(default)]
    pub rules: Vec<Rule>,
    /// Actions fired at fixed virtual times, independent of traffic.
    #[serde(default)]
    pub schedule: Vec<Scheduled>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(default)]
    pub when: Match,
    pub actions: Vec<Action>,
}

/// All present fields must match. `nth` counts prior matches of the other
/// fields, so `nth: 0` selects the first such message only.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_type: Option<MsgType>,
    /// Endpoint name of the sender.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nth: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheduled {
    pub at_ms: u64,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Forward,
    Drop,
    Record {
        tag: String,
    },
    /// Re-emit a recorded message `times` times, `spacing_ms` apart, starting
    /// `delay_ms` from now. Location defaults to where it was recorded.
    Replay {
        tag: String,
        #[serde(default)]
        delay_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        location: Option<String>,
        #[serde(default = "one")]
        times: usize,
        #[serde(default)]
        spacing_ms: u64,
    },
    Modify {
        transform: Transform,
    },
    Inject {
        payload: Payload,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        location: Option<String>,
        #[serde(default = "one")]
        times: usize,
        #[serde(default)]
        spacing_ms: u64,
    },
    Relay {
        to: String,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Hex { hex: String },
    /// Fresh random octets from Mallory's own generator.
    Random { len: usize },
    /// A syntactically valid message with random SPIs and counter.
    RandomFramed { msg_type: MsgType, sections: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    FlipBit { section: usize, byte: usize, bit: u8 },
    ReplaceSection { section: usize, hex: String },
    /// Swap KE_i or KE_r for Mallory's own value, keeping the scalar.
    SubstituteKe,
    /// Open under the key Mallory shares with the sender, seal under the key
    /// she shares with the receiver. Requires an earlier SubstituteKe.
    Reseal,
}

impl Setup {
    /// One location, one service, one user; Mallory listens at the location.
    pub fn standard(seed: u64, tier: Tier) -> Setup {
        Setup {
            seed,
            locations: vec!["l".into()],
            authorities: default_authorities(),
            registrations: vec![RegistrationSpec {
                user_id: "bob.rivera".into(),
                attributes: vec!["campus:staff".into(), "city:resident".into()],
            }],
            services: vec![ServiceSpec {
                name: "alice".into(),
                location: "l".into(),
                beacon_id: "a11ce0000000000a".into(),
                policy: "AND(campus:staff, city:resident)".into(),
            }],
            users: vec![UserSpec {
                name: "bob".into(),
                user_id: "bob.rivera".into(),
                location: "l".into(),
                tier,
                active_from_ms: 0,
                active_until_ms: None,
                wrong_password: false,
            }],
            adversary: AdversarySpec { locations: vec!["l".into()], relay_latency_ms: 20, script: AdversaryScript::default() },
            max_time_ms: default_max_time_ms(),
        }
    }
}

impl Match {
    pub fn msg(t: MsgType) -> Match {
        Match { msg_type: Some(t), ..Match::default() }
    }

    pub fn from(mut self, who: &str) -> Match {
        self.from = Some(who.into());
        self
    }

    pub fn at(mut self, loc: &str) -> Match {
        self.location = Some(loc.into());
        self
    }

    pub fn nth(mut self, n: usize) -> Match {
        self.nth = Some(n);
        self
    }

    pub fn after(mut self, ms: u64) -> Match {
        self.after_ms = Some(ms);
        self
    }

    pub fn before(mut self, ms: u64) -> Match {
        self.before_ms = Some(ms);
        self
    }
}

impl Rule {
    pub fn new(when: Match, actions: Vec<Action>) -> Rule {
        Rule { when, actions }
    }
}

impl Action {
    pub fn record(tag: &str) -> Action {
        Action::Record { tag: tag.into() }
    }

    pub fn replay(tag: &str, delay_ms: u64) -> Action {
        Action::Replay { tag: tag.into(), delay_ms, location: None, times: 1, spacing_ms: 0 }
    }

    pub fn relay(to: &str) -> Action {
        Action::Relay { to: to.into() }
    }
}
