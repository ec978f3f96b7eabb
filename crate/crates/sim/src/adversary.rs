//! Mallory. She sees wire octets and the clock, nothing else; every key she
//! holds is one she computed herself from octets she observed.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use locathe::crypto::{dh, GroupPoint, GroupScalar};
use locathe::key_schedule::{compute_keyseed, derive_sks, KeySchedule, SessionIds};
use locathe::protocol::wire::{self, Header, MsgType, ProtocolMessage, WireMessage};
use locathe::key_schedule::Role;
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

use crate::script::{Action, AdversarySpec, Payload, Rule, Transform};

/// One intercepted transmission as Mallory perceives it.
pub struct Observation<'a> {
    pub from: &'a str,
    pub location: &'a str,
    pub bytes: &'a [u8],
    /// Milliseconds since the run started.
    pub t_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emission {
    pub delay: Duration,
    pub location: String,
    pub bytes: Vec<u8>,
    pub kind: EmitKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitKind {
    Replay,
    Inject,
    Relay,
}

/// What happens to an intercepted transmission.
#[derive(Debug, Default)]
pub struct Verdict {
    /// Octets delivered locally in place of the original; `None` drops it.
    pub deliver: Option<Vec<u8>>,
    pub modified: bool,
    pub emissions: Vec<Emission>,
}

/// State for one substituted key exchange, keyed by SPI_i.
struct Leg {
    n_i: [u8; 32],
    ke_i: GroupPoint,
    /// Sent to the responder in place of KE_i.
    toward_responder: GroupScalar,
    keys_with_initiator: Option<KeySchedule>,
    keys_with_responder: Option<KeySchedule>,
}

pub struct Mallory {
    spec: AdversarySpec,
    hits: Vec<usize>,
    recordings: BTreeMap<String, (String, Vec<u8>)>,
    legs: BTreeMap<[u8; 8], Leg>,
    rng: ChaCha20Rng,
    /// Every octet string she has seen in the clear: raw wire octets plus
    /// whatever she could open.
    visible: Vec<Vec<u8>>,
}

impl Mallory {
    pub fn new(spec: AdversarySpec, rng: ChaCha20Rng) -> Mallory {
        let hits = vec![0; spec.script.rules.len()];
        Mallory { spec, hits, recordings: BTreeMap::new(), legs: BTreeMap::new(), rng, visible: Vec::new() }
    }

    pub fn is_present(&self, location: &str) -> bool {
        self.spec.locations.iter().any(|l| l == location)
    }

    pub fn locations(&self) -> BTreeSet<&str> {
        self.spec.locations.iter().map(String::as_str).collect()
    }

    pub fn visible(&self) -> &[Vec<u8>] {
        &self.visible
    }

    /// Session keys she derived by substituting key exchanges.
    pub fn derived_keys(&self) -> impl Iterator<Item = &KeySchedule> {
        self.legs.values().flat_map(|l| l.keys_with_initiator.iter().chain(l.keys_with_responder.iter()))
    }

    pub fn intercept(&mut self, o: Observation) -> Verdict {
        self.visible.push(o.bytes.to_vec());
        let decoded = wire::decode(o.bytes).ok();
        let msg_type = decoded.as_ref().map(WireMessage::msg_type);
        let Some(ix) = self.matching_rule(&o, msg_type) else {
            return Verdict { deliver: Some(o.bytes.to_vec()), ..Verdict::default() };
        };
        let rule: Rule = self.spec.script.rules[ix].clone();
        let mut v = Verdict { deliver: Some(o.bytes.to_vec()), ..Verdict::default() };
        for a in &rule.actions {
            match a {
                Action::Forward => {}
                Action::Drop => v.deliver = None,
                Action::Modify { transform } => {
                    let current = v.deliver.clone().unwrap_or_else(|| o.bytes.to_vec());
                    if let Some(b) = self.transform(transform, &current) {
                        v.modified = b != current;
                        v.deliver = Some(b);
                    }
                }
                other => v.emissions.extend(self.fire_at(other, Some((o.location, o.bytes)))),
            }
        }
        v
    }

    /// A scheduled action, not tied to an observation.
    pub fn fire(&mut self, action: &Action) -> Vec<Emission> {
        self.fire_at(action, None)
    }

    fn matching_rule(&mut self, o: &Observation, msg_type: Option<MsgType>) -> Option<usize> {
        for (i, r) in self.spec.script.rules.iter().enumerate() {
            let w = &r.when;
            let base = w.msg_type.is_none_or(|t| Some(t) == msg_type)
                && w.from.as_deref().is_none_or(|f| f == o.from)
                && w.location.as_deref().is_none_or(|l| l == o.location)
                && w.after_ms.is_none_or(|t| o.t_ms >= t)
                && w.before_ms.is_none_or(|t| o.t_ms < t);
            if !base {
                continue;
            }
            let n = self.hits[i];
            self.hits[i] += 1;
            if w.nth.is_none_or(|k| k == n) {
                return Some(i);
            }
        }
        None
    }

    fn fire_at(&mut self, action: &Action, current: Option<(&str, &[u8])>) -> Vec<Emission> {
        match action {
            Action::Record { tag } => {
                if let Some((loc, bytes)) = current {
                    self.recordings.insert(tag.clone(), (loc.to_string(), bytes.to_vec()));
                }
                Vec::new()
            }
            Action::Replay { tag, delay_ms, location, times, spacing_ms } => {
                let Some((rec_loc, bytes)) = self.recordings.get(tag).cloned() else {
                    return Vec::new();
                };
                let loc = location.clone().unwrap_or(rec_loc);
                (0..*times)
                    .map(|k| Emission {
                        delay: Duration::from_millis(delay_ms + k as u64 * spacing_ms),
                        location: loc.clone(),
                        bytes: bytes.clone(),
                        kind: EmitKind::Replay,
                    })
                    .collect()
            }
            Action::Inject { payload, location, times, spacing_ms } => {
                let loc = location.clone().or_else(|| current.map(|c| c.0.to_string())).or_else(|| self.spec.locations.first().cloned());
                let Some(loc) = loc else { return Vec::new() };
                (0..*times)
                    .map(|k| Emission {
                        delay: Duration::from_millis(k as u64 * spacing_ms),
                        location: loc.clone(),
                        bytes: self.payload(payload),
                        kind: EmitKind::Inject,
                    })
                    .collect()
            }
            Action::Relay { to } => match current {
                Some((_, bytes)) => vec![Emission {
                    delay: Duration::from_millis(self.spec.relay_latency_ms),
                    location: to.clone(),
                    bytes: bytes.to_vec(),
                    kind: EmitKind::Relay,
                }],
                None => Vec::new(),
            },
            Action::Forward | Action::Drop | Action::Modify { .. } => Vec::new(),
        }
    }

    fn payload(&mut self, p: &Payload) -> Vec<u8> {
        match p {
            Payload::Hex { hex } => hex::decode(hex).unwrap_or_default(),
            Payload::Random { len } => {
                let mut v = vec![0u8; *len];
                self.rng.fill_bytes(&mut v);
                v
            }
            Payload::RandomFramed { msg_type, sections } => {
                let mut spi_i = [0u8; 8];
                let mut spi_r = [0u8; 8];
                self.rng.fill_bytes(&mut spi_i);
                self.rng.fill_bytes(&mut spi_r);
                let counter = self.rng.next_u32() % 8;
                let secs = (0..*sections)
                    .map(|_| {
                        let mut s = vec![0u8; (self.rng.next_u32() % 48) as usize];
                        self.rng.fill_bytes(&mut s);
                        s
                    })
                    .collect();
                ProtocolMessage::new(Header::new(*msg_type, spi_i, spi_r, counter), secs).to_bytes()
            }
        }
    }

    fn transform(&mut self, t: &Transform, bytes: &[u8]) -> Option<Vec<u8>> {
        let WireMessage::Message(mut m) = wire::decode(bytes).ok()? else {
            return None;
        };
        match t {
            Transform::FlipBit { section, byte, bit } => {
                let s = m.sections.get_mut(*section)?;
                let len = s.len();
                *s.get_mut(byte % len.max(1))? ^= 1 << (bit % 8);
            }
            Transform::ReplaceSection { section, hex } => {
                *m.sections.get_mut(*section)? = hex::decode(hex).ok()?;
            }
            Transform::SubstituteKe => self.substitute_ke(&mut m)?,
            Transform::Reseal => return self.reseal(&m),
        }
        Some(m.to_bytes())
    }

    fn substitute_ke(&mut self, m: &mut ProtocolMessage) -> Option<()> {
        let h = m.header;
        match h.msg_type {
            MsgType::KeReq if m.sections.len() == 4 => {
                let ke_i = GroupPoint::decode_public(&m.sections[3]).ok()?;
                let n_i = m.sections[2].as_slice().try_into().ok()?;
                let mine = GroupScalar::random(&mut self.rng);
                m.sections[3] = mine.public_point().encode().to_vec();
                self.legs.insert(
                    h.spi_i,
                    Leg { n_i, ke_i, toward_responder: mine, keys_with_initiator: None, keys_with_responder: None },
                );
            }
            MsgType::KeResp if m.sections.len() == 2 => {
                let n_r: [u8; 32] = m.sections[0].as_slice().try_into().ok()?;
                let ke_r = GroupPoint::decode_public(&m.sections[1]).ok()?;
                let toward_initiator = GroupScalar::random(&mut self.rng);
                m.sections[1] = toward_initiator.public_point().encode().to_vec();
                let leg = self.legs.get_mut(&h.spi_i)?;
                let ids = SessionIds::new(h.spi_i, h.spi_r).ok()?;
                let derive = |s: &GroupScalar, p: &GroupPoint| {
                    let shared = dh(s, p).ok()?;
                    let seed = compute_keyseed(&shared, &leg.n_i, &n_r).ok()?;
                    Some(derive_sks(&seed, &leg.n_i, &n_r, &ids))
                };
                leg.keys_with_initiator = derive(&toward_initiator, &leg.ke_i);
                leg.keys_with_responder = derive(&leg.toward_responder, &ke_r);
            }
            _ => return None,
        }
        Some(())
    }

    fn reseal(&mut self, m: &ProtocolMessage) -> Option<Vec<u8>> {
        let sender = m.header.msg_type.sender().filter(|_| m.header.msg_type.is_encrypted())?;
        let leg = self.legs.get(&m.header.spi_i)?;
        let (open_with, seal_with) = match sender {
            Role::Initiator => (leg.keys_with_initiator.as_ref()?, leg.keys_with_responder.as_ref()?),
            Role::Responder => (leg.keys_with_responder.as_ref()?, leg.keys_with_initiator.as_ref()?),
        };
        let plain = wire::open(m, open_with, sender).ok()?;
        let out = wire::seal(m.header, &plain.iter().map(Vec::as_slice).collect::<Vec<_>>(), seal_with, sender);
        self.visible.extend(plain);
        Some(out.to_bytes())
    }
}
