//! The simulated medium and the run loop.

use std::collections::BTreeMap;
use std::time::Duration;

use locathe::abe::{AccessPolicy, Attribute, AttributeSet};
use locathe::key_schedule::KeySchedule;
use locathe::protocol::wire::{self, MsgType};
use locathe::protocol::{
    BeaconConfig, Disposition, Failure, InitiatorSession, Phase, ResponderSession, ServiceAgent, Step, TranscriptEntry,
    UserAgent,
};
use locathe::registration::{RegistrationBundle, ServiceRegistry, SharedRegistry};
use locathe::time::Timestamp;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{EmitKind, Emission, Mallory, Observation};
use crate::clock::VirtualClock;
use crate::script::{Action, Setup};

/// Virtual start of every run; a realistic epoch keeps token values honest.
pub const EPOCH: Timestamp = Timestamp::from_secs(1_700_000_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario misconfigured: {0}")]
    ScenarioMisconfigured(String),
}

fn bad(msg: impl Into<String>) -> SimError {
    SimError::ScenarioMisconfigured(msg.into())
}

enum Agent {
    User(Box<UserAgent>),
    Service(Box<ServiceAgent>),
}

struct Endpoint {
    name: String,
    location: String,
    agent: Agent,
    rng: ChaCha20Rng,
    active_from: Timestamp,
    active_until: Option<Timestamp>,
    user_id: Option<String>,
}

impl Endpoint {
    fn is_active(&self, now: Timestamp) -> bool {
        now >= self.active_from && self.active_until.is_none_or(|u| now < u)
    }

    fn next_deadline(&self) -> Option<Timestamp> {
        match &self.agent {
            Agent::User(u) => u.next_deadline(),
            Agent::Service(s) => s.next_deadline(),
        }
    }

    /// Nothing further can happen to this user's attempt.
    fn user_done(&self, now: Timestamp) -> bool {
        match &self.agent {
            Agent::User(u) => u.phase().is_terminal() || self.active_until.is_some_and(|t| now >= t),
            Agent::Service(_) => true,
        }
    }
}

enum Event {
    Tick(usize),
    Transmit { from: usize, bytes: Vec<u8> },
    Emit(Emission),
    Poll(usize),
    Scheduled(Action),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogKind {
    Tx,
    Deliver,
    Missed,
    Drop,
    Modify,
    Replay,
    Inject,
    Relay,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    /// Microseconds since the run started.
    pub t_us: u64,
    pub kind: LogKind,
    pub location: String,
    pub actor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg_type: Option<MsgType>,
    pub len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disposition: Option<Disposition>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GoalFlags {
    pub impersonated_initiator: bool,
    pub impersonated_responder: bool,
    pub learned_plaintext: bool,
    pub session_hijacked: bool,
}

impl GoalFlags {
    pub fn any(&self) -> bool {
        self.impersonated_initiator || self.impersonated_responder || self.learned_plaintext || self.session_hijacked
    }
}

/// Harness-side facts that are not adversary goals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Observations {
    /// A user ID appeared in octets Mallory could read.
    pub identity_exposed: bool,
    /// A session was established between endpoints at different locations.
    pub relayed_establishment: bool,
    pub delivered: usize,
    pub ignored: usize,
    pub rejected: usize,
    pub dropped: usize,
    pub injected: usize,
    pub replayed: usize,
    pub relayed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UserOutcome {
    pub name: String,
    pub location: String,
    pub phase: Option<Phase>,
    pub failure: Option<Failure>,
    pub ltk_fingerprint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResponderOutcome {
    pub service: String,
    pub location: String,
    pub spi_i: String,
    pub spi_r: String,
    pub phase: Phase,
    pub failure: Option<Failure>,
    pub peer_id: Option<String>,
    pub ltk_fingerprint: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioOutcome {
    pub seed: u64,
    pub users: Vec<UserOutcome>,
    pub responder_sessions: Vec<ResponderOutcome>,
    pub flags: GoalFlags,
    pub observations: Observations,
    pub transcripts: BTreeMap<String, Vec<TranscriptEntry>>,
    pub events: Vec<LogEntry>,
    pub finished_at_us: u64,
}

impl ScenarioOutcome {
    pub fn user(&self, name: &str) -> &UserOutcome {
        self.users.iter().find(|u| u.name == name).expect("named user")
    }

    pub fn sessions_at<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a ResponderOutcome> + 'a {
        self.responder_sessions.iter().filter(move |s| s.service == service)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

/// A fully built world, runnable once.
pub struct Sim {
    clock: VirtualClock<Event>,
    endpoints: Vec<Endpoint>,
    registry: SharedRegistry,
    bundles: BTreeMap<String, RegistrationBundle>,
    mallory: Mallory,
    log: Vec<LogEntry>,
    obs: Observations,
    max_time: Timestamp,
    seed: u64,
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl Sim {
    pub fn build(setup: &Setup) -> Result<Sim, SimError> {
        let has_loc = |l: &str| setup.locations.iter().any(|x| x == l);
        let mut rng = sub_rng(setup.seed, 0);
        let mut reg = ServiceRegistry::new("svc.example", &mut rng);
        // Cheap stretching keeps 50-seed catalog sweeps fast; the iteration
        // count is not what these scenarios exercise.
        reg.kdf_iterations = 16;
        for (auth, universe) in &setup.authorities {
            let u: Vec<&str> = universe.iter().map(String::as_str).collect();
            reg.setup_authority(auth, &u, &mut rng).map_err(|e| bad(e.to_string()))?;
        }
        let mut bundles = BTreeMap::new();
        for r in &setup.registrations {
            let attrs: AttributeSet = r
                .attributes
                .iter()
                .map(|a| a.parse::<Attribute>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("{}: {e}", r.user_id)))?;
            let b = reg.register_user(&r.user_id, &attrs, None, EPOCH, &mut rng).map_err(|e| bad(e.to_string()))?;
            bundles.insert(r.user_id.clone(), b);
        }
        let registry = reg.into_shared();

        let mut endpoints = Vec::new();
        let mut stream = 1;
        for s in &setup.services {
            if !has_loc(&s.location) {
                return Err(bad(format!("service {} at unknown location {}", s.name, s.location)));
            }
            let id: [u8; 8] = hex::decode(&s.beacon_id)
                .ok()
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| bad(format!("beacon_id of {} must be 16 hex digits", s.name)))?;
            let policy: AccessPolicy = s.policy.parse().map_err(|e| bad(format!("{}: {e}", s.name)))?;
            let agent = ServiceAgent::new(registry.clone(), BeaconConfig::new(id, &s.location, policy))
                .map_err(|e| bad(e.to_string()))?
                .with_audit(true);
            endpoints.push(Endpoint {
                name: s.name.clone(),
                location: s.location.clone(),
                agent: Agent::Service(Box::new(agent)),
                rng: sub_rng(setup.seed, stream),
                active_from: EPOCH,
                active_until: None,
                user_id: None,
            });
            stream += 1;
        }
        for u in &setup.users {
            if !has_loc(&u.location) {
                return Err(bad(format!("user {} at unknown location {}", u.name, u.location)));
            }
            let b = bundles.get(&u.user_id).ok_or_else(|| bad(format!("user {} is not registered", u.user_id)))?;
            let mut agent = UserAgent::new(b, u.tier).map_err(|e| bad(e.to_string()))?.with_audit(true);
            if u.wrong_password {
                let mut spwd = b.spwd;
                spwd[0] ^= 0x01;
                agent = agent.with_spwd(spwd);
            }
            endpoints.push(Endpoint {
                name: u.name.clone(),
                location: u.location.clone(),
                agent: Agent::User(Box::new(agent)),
                rng: sub_rng(setup.seed, stream),
                active_from: EPOCH + Duration::from_millis(u.active_from_ms),
                active_until: u.active_until_ms.map(|t| EPOCH + Duration::from_millis(t)),
                user_id: Some(u.user_id.clone()),
            });
            stream += 1;
        }
        let mut names: Vec<&str> = endpoints.iter().map(|e| e.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("endpoint names must be unique"));
        }
        for l in &setup.adversary.locations {
            if !has_loc(l) {
                return Err(bad(format!("adversary at unknown location {l}")));
            }
        }
        let mut services_per_loc = BTreeMap::new();
        for s in &setup.services {
            *services_per_loc.entry(&s.location).or_insert(0) += 1;
        }
        if services_per_loc.values().any(|&n| n > 1) {
            return Err(bad("at most one service per location"));
        }

        let mut clock = VirtualClock::new(EPOCH);
        for (i, e) in endpoints.iter().enumerate() {
            if matches!(e.agent, Agent::Service(_)) {
                clock.schedule_at(EPOCH, Event::Tick(i));
            }
        }
        for s in &setup.adversary.script.schedule {
            clock.schedule_at(EPOCH + Duration::from_millis(s.at_ms), Event::Scheduled(s.action.clone()));
        }
        let mallory = Mallory::new(setup.adversary.clone(), sub_rng(setup.seed, 0x4d41));
        Ok(Sim {
            clock,
            endpoints,
            registry,
            bundles,
            mallory,
            log: Vec::new(),
            obs: Observations::default(),
            max_time: EPOCH + Duration::from_millis(setup.max_time_ms),
            seed: setup.seed,
        })
    }

    fn rel_us(&self) -> u64 {
        self.clock.now().as_micros() - EPOCH.as_micros()
    }

    fn note(&mut self, kind: LogKind, location: &str, actor: &str, bytes: &[u8], disposition: Option<Disposition>) {
        let msg_type = wire::decode(bytes).ok().map(|m| m.msg_type());
        self.log.push(LogEntry {
            t_us: self.rel_us(),
            kind,
            location: location.to_string(),
            actor: actor.to_string(),
            msg_type,
            len: bytes.len(),
            disposition,
        });
    }

    fn finished(&self) -> bool {
        let now = self.clock.now();
        self.endpoints.iter().all(|e| e.user_done(now)) && self.clock.pending().all(|e| matches!(e, Event::Tick(_)))
    }

    pub fn run(mut self) -> ScenarioOutcome {
        while !self.finished() {
            let Some((at, ev)) = self.clock.pop() else { break };
            if at > self.max_time {
                break;
            }
            match ev {
                Event::Tick(i) => self.on_tick(i),
                Event::Transmit { from, bytes } => self.on_transmit(from, bytes),
                Event::Emit(e) => self.on_emit(e),
                Event::Poll(i) => self.on_poll(i),
                Event::Scheduled(a) => {
                    let em = self.mallory.fire(&a);
                    self.schedule_emissions(em);
                }
            }
        }
        self.outcome()
    }

    fn on_tick(&mut self, i: usize) {
        let now = self.clock.now();
        let e = &mut self.endpoints[i];
        let Agent::Service(s) = &mut e.agent else { return };
        let interval = s.config().broadcast_interval;
        let advert = s.tick(now, &mut e.rng).expect("validated beacon config");
        self.clock.schedule_in(interval, Event::Tick(i));
        self.clock.schedule_at(now, Event::Transmit { from: i, bytes: advert });
    }

    fn on_transmit(&mut self, from: usize, bytes: Vec<u8>) {
        let (name, loc) = (self.endpoints[from].name.clone(), self.endpoints[from].location.clone());
        self.note(LogKind::Tx, &loc, &name, &bytes, None);
        if !self.mallory.is_present(&loc) {
            self.deliver_all(&loc, Some(from), &bytes);
            return;
        }
        let t_ms = self.rel_us() / 1000;
        let v = self.mallory.intercept(Observation { from: &name, location: &loc, bytes: &bytes, t_ms });
        match v.deliver {
            Some(b) => {
                if v.modified {
                    self.note(LogKind::Modify, &loc, "mallory", &b, None);
                }
                self.deliver_all(&loc, Some(from), &b);
            }
            None => {
                self.obs.dropped += 1;
                self.note(LogKind::Drop, &loc, "mallory", &bytes, None);
            }
        }
        self.schedule_emissions(v.emissions);
    }

    fn schedule_emissions(&mut self, em: Vec<Emission>) {
        for e in em {
            self.clock.schedule_in(e.delay, Event::Emit(e));
        }
    }

    fn on_emit(&mut self, e: Emission) {
        let kind = match e.kind {
            EmitKind::Replay => {
                self.obs.replayed += 1;
                LogKind::Replay
            }
            EmitKind::Inject => {
                self.obs.injected += 1;
                LogKind::Inject
            }
            EmitKind::Relay => {
                self.obs.relayed += 1;
                LogKind::Relay
            }
        };
        self.note(kind, &e.location, "mallory", &e.bytes, None);
        self.deliver_all(&e.location, None, &e.bytes);
    }

    fn deliver_all(&mut self, location: &str, except: Option<usize>, bytes: &[u8]) {
        let targets: Vec<usize> =
            (0..self.endpoints.len()).filter(|&i| Some(i) != except && self.endpoints[i].location == location).collect();
        for i in targets {
            self.deliver(i, bytes);
        }
    }

    fn deliver(&mut self, i: usize, bytes: &[u8]) {
        let now = self.clock.now();
        let (name, loc) = (self.endpoints[i].name.clone(), self.endpoints[i].location.clone());
        if !self.endpoints[i].is_active(now) {
            self.note(LogKind::Missed, &loc, &name, bytes, None);
            return;
        }
        let e = &mut self.endpoints[i];
        let step: Step = match &mut e.agent {
            Agent::User(u) => u.handle(bytes, now, &mut e.rng),
            Agent::Service(s) => s.handle(bytes, now, &mut e.rng),
        };
        self.obs.delivered += 1;
        match step.disposition {
            Disposition::Ignore => self.obs.ignored += 1,
            Disposition::Reject => self.obs.rejected += 1,
            Disposition::Process => {}
        }
        self.note(LogKind::Deliver, &loc, &name, bytes, Some(step.disposition));
        self.after_step(i, step);
    }

    fn after_step(&mut self, i: usize, step: Step) {
        for o in step.outgoing {
            self.clock.schedule_in(o.delay, Event::Transmit { from: i, bytes: o.bytes });
        }
        if let Some(d) = self.endpoints[i].next_deadline() {
            self.clock.schedule_at(d, Event::Poll(i));
        }
    }

    fn on_poll(&mut self, i: usize) {
        let now = self.clock.now();
        let e = &mut self.endpoints[i];
        let step = match &mut e.agent {
            Agent::User(u) => u.poll(now),
            Agent::Service(s) => s.poll(now),
        };
        if step.disposition == Disposition::Process {
            let (loc, name) = (e.location.clone(), e.name.clone());
            self.note(LogKind::Timeout, &loc, &name, &[], None);
        }
        self.after_step(i, step);
    }

    fn users(&self) -> impl Iterator<Item = (&Endpoint, Option<&InitiatorSession>)> {
        self.endpoints.iter().filter_map(|e| match &e.agent {
            Agent::User(u) => Some((e, u.session())),
            Agent::Service(_) => None,
        })
    }

    fn responders(&self) -> impl Iterator<Item = (&Endpoint, &ResponderSession)> {
        self.endpoints.iter().flat_map(|e| match &e.agent {
            Agent::Service(s) => s.sessions().map(|r| (e, r)).collect::<Vec<_>>(),
            Agent::User(_) => Vec::new(),
        })
    }

    /// Octet strings whose appearance in Mallory's view counts as a win.
    fn sensitive(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = Vec::new();
        let reg = self.registry.read().expect("registry lock");
        for b in self.bundles.values() {
            if let Ok(rec) = reg.lookup_user(&b.user_id, EPOCH) {
                out.push(rec.user_key().to_vec());
            }
            out.push(b.spwd.to_vec());
            out.push(b.token_seed.seed().to_vec());
            for k in &b.abe_keys {
                out.extend(k.share_bytes().map(|s| s.to_vec()));
            }
        }
        let mut keys = |k: &KeySchedule| {
            out.push(k.keyseed.to_vec());
            out.extend(k.all_keys().iter().map(|s| s.as_bytes().to_vec()));
        };
        for (_, s) in self.users() {
            if let Some(k) = s.and_then(InitiatorSession::keys) {
                keys(k);
            }
        }
        for (_, r) in self.responders() {
            keys(r.keys());
        }
        let audits = self
            .users()
            .filter_map(|(_, s)| s.and_then(InitiatorSession::audit))
            .chain(self.responders().filter_map(|(_, r)| r.audit()));
        for a in audits {
            out.extend(a.n_b.map(|v| v.to_vec()));
            out.extend(a.kpwd.as_ref().map(|k| k.as_bytes().to_vec()));
            out.extend(a.s.map(|s| s.to_bytes().to_vec()));
            out.extend(a.tk.as_ref().map(|t| t.as_bytes().to_vec()));
            out.extend(a.gtk.map(|g| g.to_vec()));
            out.extend(a.ephemeral.map(|k| k.to_bytes().to_vec()));
            out.extend(a.lsk.map(|k| k.to_bytes().to_vec()));
        }
        let ltks = self
            .users()
            .filter_map(|(_, s)| s.and_then(InitiatorSession::long_term_secret))
            .chain(self.responders().filter_map(|(_, r)| r.long_term_secret()));
        out.extend(ltks.map(|l| l.key().to_vec()));
        out
    }

    fn flags(&self) -> (GoalFlags, bool) {
        let established_i: Vec<(&Endpoint, &InitiatorSession)> = self
            .users()
            .filter_map(|(e, s)| s.filter(|s| s.phase() == Phase::Established).map(|s| (e, s)))
            .collect();
        let established_r: Vec<(&Endpoint, &ResponderSession)> =
            self.responders().filter(|(_, r)| r.phase() == Phase::Established).collect();
        let peer_of_r = |r: &ResponderSession| established_i.iter().find(|(_, i)| i.keys() == Some(r.keys()));
        let peer_of_i = |i: &InitiatorSession| established_r.iter().find(|(_, r)| Some(r.keys()) == i.keys());

        let mut f = GoalFlags {
            impersonated_initiator: established_r.iter().any(|(_, r)| peer_of_r(r).is_none()),
            impersonated_responder: established_i.iter().any(|(_, i)| peer_of_i(i).is_none()),
            ..GoalFlags::default()
        };
        let stolen: Vec<&KeySchedule> = self.mallory.derived_keys().collect();
        f.session_hijacked = established_i.iter().filter_map(|(_, i)| i.keys()).any(|k| stolen.contains(&k))
            || established_r.iter().any(|(_, r)| stolen.contains(&r.keys()));
        let visible = self.mallory.visible();
        let seen = |needle: &[u8]| !needle.is_empty() && visible.iter().any(|v| v.windows(needle.len()).any(|w| w == needle));
        f.learned_plaintext = self.sensitive().iter().any(|s| seen(s));
        let relayed = established_r
            .iter()
            .any(|(re, r)| peer_of_r(r).is_some_and(|(ie, _)| ie.location != re.location));
        (f, relayed)
    }

    fn outcome(self) -> ScenarioOutcome {
        let (flags, relayed) = self.flags();
        let mut obs = self.obs.clone();
        obs.relayed_establishment = relayed;
        let visible = self.mallory.visible();
        obs.identity_exposed = self.endpoints.iter().filter_map(|e| e.user_id.as_deref()).any(|id| {
            visible.iter().any(|v| v.windows(id.len()).any(|w| w == id.as_bytes()))
        });
        let users = self
            .users()
            .map(|(e, s)| UserOutcome {
                name: e.name.clone(),
                location: e.location.clone(),
                phase: s.map(InitiatorSession::phase),
                failure: s.and_then(InitiatorSession::failure),
                ltk_fingerprint: s.and_then(|s| s.long_term_secret()).map(|l| l.fingerprint()),
            })
            .collect();
        let responder_sessions = self
            .responders()
            .map(|(e, r)| ResponderOutcome {
                service: e.name.clone(),
                location: e.location.clone(),
                spi_i: hex::encode(r.ids().spi_i),
                spi_r: hex::encode(r.ids().spi_r),
                phase: r.phase(),
                failure: r.failure(),
                peer_id: r.peer_id().map(str::to_string),
                ltk_fingerprint: r.long_term_secret().map(|l| l.fingerprint()),
            })
            .collect();
        let mut transcripts = BTreeMap::new();
        for (e, s) in self.users() {
            if let Some(s) = s {
                transcripts.insert(e.name.clone(), s.transcript().to_vec());
            }
        }
        for (e, r) in self.responders() {
            transcripts.insert(format!("{}/{}", e.name, hex::encode(r.ids().spi_r)), r.transcript().to_vec());
        }
        ScenarioOutcome {
            seed: self.seed,
            users,
            responder_sessions,
            flags,
            observations: obs,
            transcripts,
            finished_at_us: self.rel_us(),
            events: self.log,
        }
    }
}

pub fn run_scenario(setup: &Setup) -> Result<ScenarioOutcome, SimError> {
    Ok(Sim::build(setup)?.run())
}
