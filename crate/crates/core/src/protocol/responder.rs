//! The service side: one beacon, its broadcast records, and the sessions it
//! answers.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use rand_core::CryptoRngCore;
use zeroize::Zeroize;

use super::beacon::{beacon_tick, fetch_bnonce, nb_window_check, BeaconConfig, BeaconError, BroadcastRecord};
use super::wire::{self, error_message, Header, MsgType, ProtocolMessage, WireMessage};
use super::{
    on_duplicate_or_stale, AuditRecord, Direction, Disposition, Failure, FailureReason, Outgoing, Phase, Step, Tier,
    TranscriptEntry, FACTOR_TOKEN, RESPONSE_TIMEOUT, TIER2_ERROR_DELAY,
};
use crate::abe::PublicParams;
use crate::crypto::{ct_eq, dh, ecdhe_keypair, totp, GroupPoint, GroupScalar, SigningKey, NONCE_LEN};
use crate::key_schedule::*;
use crate::registration::{ServiceCertificate, SharedRegistry};
use crate::time::Timestamp;

/// Read-only service context handed to a session while it processes input.
struct Ctx<'a> {
    registry: &'a SharedRegistry,
    signing_key: &'a SigningKey,
    cert_bytes: &'a [u8],
    relying_party: Option<&'a str>,
    records: &'a VecDeque<BroadcastRecord>,
}

impl Ctx<'_> {
    fn live_record(&self, handle: &[u8; 8], now: Timestamp) -> Option<&BroadcastRecord> {
        self.records.iter().find(|r| r.handle == *handle && nb_window_check(r, now))
    }
}

pub struct ServiceAgent {
    registry: SharedRegistry,
    cfg: BeaconConfig,
    signing_key: SigningKey,
    cert: ServiceCertificate,
    cert_bytes: Vec<u8>,
    pp: PublicParams,
    relying_party: Option<String>,
    records: VecDeque<BroadcastRecord>,
    sessions: BTreeMap<[u8; 8], ResponderSession>,
    by_spi_i: BTreeMap<[u8; 8], [u8; 8]>,
    audit: bool,
}

impl ServiceAgent {
    pub fn new(registry: SharedRegistry, cfg: BeaconConfig) -> Result<Self, BeaconError> {
        cfg.validate()?;
        let (signing_key, cert, pp) = {
            let r = registry.read().expect("registry lock");
            (r.signing_key().clone(), r.certificate(), r.authorities.public_params())
        };
        let cert_bytes = cert.to_bytes();
        Ok(ServiceAgent {
            registry,
            cfg,
            signing_key,
            cert,
            cert_bytes,
            pp,
            relying_party: None,
            records: VecDeque::new(),
            sessions: BTreeMap::new(),
            by_spi_i: BTreeMap::new(),
            audit: false,
        })
    }

    pub fn with_relying_party(mut self, rp: Option<String>) -> Self {
        self.relying_party = rp;
        self
    }

    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn config(&self) -> &BeaconConfig {
        &self.cfg
    }

    pub fn certificate(&self) -> &ServiceCertificate {
        &self.cert
    }

    pub fn records(&self) -> impl Iterator<Item = &BroadcastRecord> {
        self.records.iter()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &ResponderSession> {
        self.sessions.values()
    }

    pub fn session_for(&self, spi_i: &[u8; 8]) -> Option<&ResponderSession> {
        self.by_spi_i.get(spi_i).and_then(|r| self.sessions.get(r))
    }

    pub fn next_deadline(&self) -> Option<Timestamp> {
        self.sessions.values().filter_map(|s| s.deadline).min()
    }

    /// One broadcast: regenerate N_b, keep the record, return the advert.
    pub fn tick(&mut self, now: Timestamp, rng: &mut impl CryptoRngCore) -> Result<Vec<u8>, BeaconError> {
        let (advert, record) = beacon_tick(&self.cfg, &self.signing_key, &self.pp, now, rng)?;
        self.records.push_back(record);
        while self.records.len() > self.cfg.retained_records() {
            self.records.pop_front();
        }
        Ok(advert.to_bytes().to_vec())
    }

    pub fn poll(&mut self, now: Timestamp) -> Step {
        let mut fired = false;
        for s in self.sessions.values_mut() {
            if !s.phase.is_terminal() && s.deadline.is_some_and(|d| now >= d) {
                s.fail(FailureReason::Timeout, Duration::ZERO);
                fired = true;
            }
        }
        if fired {
            Step::process(Vec::new())
        } else {
            Step::ignore()
        }
    }

    pub fn handle(&mut self, bytes: &[u8], now: Timestamp, rng: &mut impl CryptoRngCore) -> Step {
        let m = match wire::decode(bytes) {
            Ok(WireMessage::Message(m)) => m,
            Ok(WireMessage::Advert(_)) => return Step::ignore(),
            Err(_) => return Step::reject(),
        };
        let h = m.header;
        match h.msg_type {
            MsgType::BnonceFetchReq => match fetch_bnonce(&self.records, &m, &self.cert, now) {
                Ok(resp) => Step::process(vec![Outgoing::now(resp.to_bytes())]),
                // Unknown or expired handles are dropped without an answer.
                Err(_) => Step::reject(),
            },
            MsgType::KeReq => self.on_ke_req(&m, bytes, now, rng),
            _ if h.spi_r == [0; 8] => {
                if h.spi_i == [0; 8] {
                    Step::ignore()
                } else {
                    Step::reject()
                }
            }
            _ => {
                let ctx = Ctx {
                    registry: &self.registry,
                    signing_key: &self.signing_key,
                    cert_bytes: &self.cert_bytes,
                    relying_party: self.relying_party.as_deref(),
                    records: &self.records,
                };
                match self.sessions.get_mut(&h.spi_r) {
                    Some(s) if s.ids.spi_i == h.spi_i => s.handle(&m, bytes, &ctx, now, rng),
                    _ => Step::reject(),
                }
            }
        }
    }

    fn on_ke_req(&mut self, m: &ProtocolMessage, raw: &[u8], now: Timestamp, rng: &mut impl CryptoRngCore) -> Step {
        let h = m.header;
        if h.spi_i == [0; 8] || h.spi_r != [0; 8] || h.counter == 0 {
            return Step::reject();
        }
        if self.by_spi_i.contains_key(&h.spi_i) {
            return Step::ignore();
        }
        let Some((tier, handle, n_i, ke_i)) = parse_ke_req(m) else {
            return Step::reject();
        };
        let spi_r = loop {
            let s = random_spi(rng);
            if s != h.spi_i && !self.sessions.contains_key(&s) {
                break s;
            }
        };
        let ids = SessionIds::new(h.spi_i, spi_r).expect("distinct nonzero SPIs");
        let fetch_resp = self.records.iter().find(|r| r.handle == handle).map(|r| r.fetch_response(&self.cert).to_bytes());
        let (session, out) =
            ResponderSession::start(tier, handle, ids, n_i, ke_i, h.counter, raw, fetch_resp, now, self.audit, rng);
        self.by_spi_i.insert(h.spi_i, spi_r);
        self.sessions.insert(spi_r, session);
        Step::process(vec![out])
    }
}

fn parse_ke_req(m: &ProtocolMessage) -> Option<(Tier, [u8; 8], [u8; 32], GroupPoint)> {
    if m.sections.len() != 4 || m.sections[0].len() != 1 {
        return None;
    }
    let tier = Tier::from_octet(m.sections[0][0])?;
    let handle = m.sections[1].as_slice().try_into().ok()?;
    let n_i: [u8; 32] = m.sections[2].as_slice().try_into().ok()?;
    if n_i == [0; 32] {
        return None;
    }
    let ke_i = GroupPoint::decode_public(&m.sections[3]).ok()?;
    Some((tier, handle, n_i, ke_i))
}

struct Secrets {
    kr: GroupScalar,
    shared: GroupPoint,
    lsk: Option<GroupScalar>,
    gtk: Option<[u8; 32]>,
}

impl Drop for Secrets {
    fn drop(&mut self) {
        self.kr.zeroize();
        if let Some(l) = self.lsk.as_mut() {
            l.zeroize();
        }
        if let Some(g) = self.gtk.as_mut() {
            g.zeroize();
        }
    }
}

pub struct ResponderSession {
    tier: Tier,
    phase: Phase,
    failure: Option<Failure>,
    handle: [u8; 8],
    ids: SessionIds,
    n_i: [u8; 32],
    n_r: [u8; 32],
    ke_r: GroupPoint,
    keys: KeySchedule,
    ge: Option<GroupPoint>,
    auth_shared: Option<GroupPoint>,
    ltk: Option<LongTermSecret>,
    peer_id: Option<String>,
    peer_requests: Vec<u8>,
    secrets: Option<Secrets>,
    send_counter: u32,
    recv_hw: u32,
    /// Starts with the canonical BNONCE_FETCH_RESP of the bound record.
    sent_octets: Vec<u8>,
    /// Starts with KE_REQ.
    recv_octets: Vec<u8>,
    transcript: Vec<TranscriptEntry>,
    deadline: Option<Timestamp>,
    audit: Option<AuditRecord>,
}

type Res = Result<Vec<Outgoing>, (FailureReason, Duration)>;

fn malformed() -> (FailureReason, Duration) {
    (FailureReason::MalformedMessage, Duration::ZERO)
}

impl ResponderSession {
    #[allow(clippy::too_many_arguments)]
    fn start(
        tier: Tier,
        handle: [u8; 8],
        ids: SessionIds,
        n_i: [u8; 32],
        ke_i: GroupPoint,
        counter: u32,
        raw: &[u8],
        fetch_resp: Option<Vec<u8>>,
        now: Timestamp,
        audit: bool,
        rng: &mut impl CryptoRngCore,
    ) -> (Self, Outgoing) {
        let n_r = random_nonce(rng);
        let (kr, ke_r) = ecdhe_keypair(rng);
        let shared = dh(&kr, &ke_i).expect("KE_i validated as a public point");
        let mut keyseed = compute_keyseed(&shared, &n_i, &n_r).expect("shared is not the identity");
        let keys = derive_sks(&keyseed, &n_i, &n_r, &ids);
        keyseed.zeroize();
        let mut audit = audit.then(AuditRecord::default);
        if let Some(a) = audit.as_mut() {
            a.ephemeral = Some(kr);
            a.shared = Some(shared);
        }
        let mut s = ResponderSession {
            tier,
            phase: if tier.runs_tier1() { Phase::AwaitT1 } else { Phase::AwaitT2 },
            failure: None,
            handle,
            ids,
            n_i,
            n_r,
            ke_r,
            keys,
            ge: None,
            auth_shared: None,
            ltk: None,
            peer_id: None,
            peer_requests: Vec::new(),
            secrets: Some(Secrets { kr, shared, lsk: None, gtk: None }),
            send_counter: 1,
            recv_hw: counter,
            sent_octets: fetch_resp.unwrap_or_default(),
            recv_octets: raw.to_vec(),
            transcript: Vec::new(),
            deadline: Some(now + RESPONSE_TIMEOUT),
            audit,
        };
        s.push(Direction::Received, MsgType::KeReq, raw);
        let resp = ProtocolMessage::new(
            Header::new(MsgType::KeResp, ids.spi_i, ids.spi_r, s.send_counter),
            vec![n_r.to_vec(), ke_r.encode().to_vec()],
        );
        let bytes = resp.to_bytes();
        s.sent_octets.extend_from_slice(&bytes);
        s.push(Direction::Sent, MsgType::KeResp, &bytes);
        (s, Outgoing::now(bytes))
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn failure(&self) -> Option<Failure> {
        self.failure
    }

    pub fn handle_id(&self) -> [u8; 8] {
        self.handle
    }

    pub fn ids(&self) -> SessionIds {
        self.ids
    }

    pub fn nonces(&self) -> ([u8; 32], [u8; 32]) {
        (self.n_i, self.n_r)
    }

    pub fn keys(&self) -> &KeySchedule {
        &self.keys
    }

    pub fn ge(&self) -> Option<&GroupPoint> {
        self.ge.as_ref()
    }

    pub fn auth_shared(&self) -> Option<&GroupPoint> {
        self.auth_shared.as_ref()
    }

    pub fn long_term_secret(&self) -> Option<&LongTermSecret> {
        self.ltk.as_ref()
    }

    /// ID_i as received in Tier 2; `None` for an anonymous Tier 1 peer.
    pub fn peer_id(&self) -> Option<&str> {
        self.peer_id.as_deref()
    }

    /// Opaque Tier 1 requests, uninterpreted.
    pub fn peer_requests(&self) -> &[u8] {
        &self.peer_requests
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn audit(&self) -> Option<&AuditRecord> {
        self.audit.as_ref()
    }

    pub fn holds_ephemeral_secrets(&self) -> bool {
        self.secrets.is_some()
    }

    fn push(&mut self, direction: Direction, msg_type: MsgType, bytes: &[u8]) {
        self.transcript.push(TranscriptEntry { direction, msg_type, hex: bytes.to_vec() });
    }

    fn fail(&mut self, reason: FailureReason, delay: Duration) -> Vec<Outgoing> {
        self.failure = Some(Failure { reason, phase: self.phase });
        self.phase = Phase::Failed;
        self.deadline = None;
        self.secrets = None;
        match reason.error_class() {
            Some(class) => {
                self.send_counter += 1;
                let bytes = error_message(self.ids.spi_i, self.ids.spi_r, self.send_counter, class).to_bytes();
                self.push(Direction::Sent, MsgType::Error, &bytes);
                vec![Outgoing { bytes, delay }]
            }
            None => Vec::new(),
        }
    }

    fn handle(&mut self, m: &ProtocolMessage, raw: &[u8], ctx: &Ctx, now: Timestamp, rng: &mut impl CryptoRngCore) -> Step {
        let h = m.header;
        match on_duplicate_or_stale(true, self.recv_hw, h.counter) {
            Disposition::Process => {}
            d => return Step { disposition: d, outgoing: Vec::new() },
        }
        if self.phase.is_terminal() {
            return Step::ignore();
        }
        if h.msg_type == MsgType::Error {
            self.recv_hw = h.counter;
            self.push(Direction::Received, MsgType::Error, raw);
            return Step::process(self.fail(FailureReason::PeerError, Duration::ZERO));
        }
        let expected = match self.phase {
            Phase::AwaitT1 => MsgType::T1AuthReq,
            Phase::AwaitT2 => MsgType::T2Msg1,
            Phase::AwaitFinal => MsgType::FinalAuthReq,
            _ => return Step::ignore(),
        };
        if h.msg_type != expected {
            return Step::ignore();
        }
        self.recv_hw = h.counter;
        self.push(Direction::Received, h.msg_type, raw);
        let res = match expected {
            MsgType::T1AuthReq => self.on_t1_req(m, raw, ctx, now, rng),
            MsgType::T2Msg1 => self.on_t2_msg1(m, raw, ctx, now, rng),
            _ => self.on_final_req(m, ctx, now),
        };
        Step::process(res.unwrap_or_else(|(r, delay)| self.fail(r, delay)))
    }

    fn send_sealed(&mut self, t: MsgType, sections: &[&[u8]], now: Timestamp) -> Outgoing {
        self.send_counter += 1;
        let h = Header::new(t, self.ids.spi_i, self.ids.spi_r, self.send_counter);
        let bytes = wire::seal(h, sections, &self.keys, Role::Responder).to_bytes();
        self.sent_octets.extend_from_slice(&bytes);
        self.push(Direction::Sent, t, &bytes);
        self.deadline = Some(now + RESPONSE_TIMEOUT);
        Outgoing::now(bytes)
    }

    fn on_t1_req(&mut self, m: &ProtocolMessage, raw: &[u8], ctx: &Ctx, now: Timestamp, rng: &mut impl CryptoRngCore) -> Res {
        use FailureReason::*;
        let s = wire::open(m, &self.keys, Role::Initiator).map_err(|_| (DecryptFailed, Duration::ZERO))?;
        if s.len() != 3 {
            return Err(malformed());
        }
        let (auth_i, lpk_i, requests) = (&s[0], &s[1], &s[2]);
        // An unknown handle or an n_b outside its window cannot authenticate.
        let n_b = *ctx.live_record(&self.handle, now).ok_or((AuthMismatch, Duration::ZERO))?.n_b();
        let so_i = build_signed_octets(&self.recv_octets, None, self.keys.sk_p(Role::Initiator), &self.n_r);
        let expected = compute_auth_tier1(Role::Initiator, &n_b, &self.n_i, &self.n_r, &self.ke_r, &so_i);
        if !ct_eq(&expected, auth_i) {
            return Err((AuthMismatch, Duration::ZERO));
        }
        self.recv_octets.extend_from_slice(raw);
        self.peer_requests = requests.clone();
        if let Some(a) = self.audit.as_mut() {
            a.n_b = Some(n_b);
        }

        let so_r = build_signed_octets(&self.sent_octets, Some(ctx.cert_bytes), self.keys.sk_p(Role::Responder), &self.n_i);
        let auth_r = compute_auth_tier1(Role::Responder, &n_b, &self.n_i, &self.n_r, &self.ke_r, &so_r);
        let sig = ctx.signing_key.sign(&auth_r).to_bytes();
        let lpk_r = if self.tier == Tier::One {
            let lpk_i = GroupPoint::decode_public(lpk_i).map_err(|_| malformed())?;
            let secrets = self.secrets.as_mut().expect("secrets");
            let ge = compute_ge(&tier1_ge_scalar(&n_b, &self.n_i, &self.n_r), &secrets.shared)
                .map_err(|_| (DegenerateGE, Duration::ZERO))?;
            let (lsk, lpk) = tier2_keypair(&ge, rng);
            let auth_shared = compute_auth_shared_secret(&lsk, &lpk_i).map_err(|_| malformed())?;
            let gtk = compute_gtk(&ge, "");
            secrets.lsk = Some(lsk);
            secrets.gtk = Some(gtk);
            if let Some(a) = self.audit.as_mut() {
                a.lsk = Some(lsk);
                a.gtk = Some(gtk);
            }
            self.ge = Some(ge);
            self.auth_shared = Some(auth_shared);
            lpk.encode().to_vec()
        } else {
            if !lpk_i.is_empty() {
                return Err(malformed());
            }
            Vec::new()
        };
        let out = self.send_sealed(MsgType::T1AuthResp, &[&auth_r, &sig, ctx.cert_bytes, &lpk_r], now);
        self.phase = if self.tier == Tier::One { Phase::AwaitFinal } else { Phase::AwaitT2 };
        Ok(vec![out])
    }

    /// AUTH_TIER2 is checked before the user lookup; both failures produce
    /// the same ERROR after the same delay.
    fn on_t2_msg1(&mut self, m: &ProtocolMessage, raw: &[u8], ctx: &Ctx, now: Timestamp, rng: &mut impl CryptoRngCore) -> Res {
        use FailureReason::*;
        let s = wire::open(m, &self.keys, Role::Initiator).map_err(|_| (DecryptFailed, Duration::ZERO))?;
        if s.len() != 5 {
            return Err(malformed());
        }
        let nonce12: [u8; NONCE_LEN] = s[0].as_slice().try_into().map_err(|_| malformed())?;
        let enonce = &s[1];
        if enonce.len() != 32 {
            return Err(malformed());
        }
        let id = std::str::from_utf8(&s[2]).map_err(|_| malformed())?.to_string();
        let auth_t2 = &s[3];
        let lpk_i = GroupPoint::decode_public(&s[4]).map_err(|_| malformed())?;

        let denied = (AuthTier2Mismatch, TIER2_ERROR_DELAY);
        let n_b = *ctx.live_record(&self.handle, now).ok_or(denied)?.n_b();
        let sk_pi = self.keys.sk_p(Role::Initiator);
        let so = build_signed_octets(&self.recv_octets, Some(id.as_bytes()), sk_pi, &self.n_r);
        if !ct_eq(&compute_auth_tier2(&n_b, &so, sk_pi), auth_t2) {
            return Err(denied);
        }
        let (mut spwd, seed) = {
            let reg = ctx.registry.read().expect("registry lock");
            let rec = reg.lookup_user_for(&id, ctx.relying_party, now).map_err(|_| (UnknownUser, TIER2_ERROR_DELAY))?;
            (rec.spwd, rec.token_seed.clone())
        };
        let kpwd = derive_kpwd(&spwd, &self.n_i, &self.n_r, &self.ids);
        let s_opened = open_enonce(&kpwd, &nonce12, enonce);
        if let Some(a) = self.audit.as_mut() {
            a.n_b = Some(n_b);
            a.kpwd = Some(kpwd.clone());
            a.s = Some(s_opened);
        }
        let secrets = self.secrets.as_mut().expect("secrets");
        let t2 = Tier2State::new(&spwd, kpwd, s_opened, &secrets.shared, rng);
        spwd.zeroize();
        let t2 = t2.map_err(|_| (DegenerateGE, Duration::ZERO))?;
        let auth_shared = compute_auth_shared_secret(&t2.lsk, &lpk_i).map_err(|_| malformed())?;
        let mut tk = totp(&seed, now);
        let gtk = compute_gtk(&t2.ge, &tk);
        secrets.lsk = Some(t2.lsk);
        secrets.gtk = Some(gtk);
        if let Some(a) = self.audit.as_mut() {
            a.lsk = Some(t2.lsk);
            a.tk = Some(tk.clone());
            a.gtk = Some(gtk);
        }
        tk.zeroize();
        self.ge = Some(t2.ge);
        self.auth_shared = Some(auth_shared);
        self.peer_id = Some(id);
        self.recv_octets.extend_from_slice(raw);
        let lpk_r = t2.lpk.encode();
        let out = self.send_sealed(MsgType::T2Msg2, &[ctx.cert_bytes, &lpk_r, FACTOR_TOKEN], now);
        self.phase = Phase::AwaitFinal;
        Ok(vec![out])
    }

    /// On mismatch the session fails and AUTH_r is never produced.
    fn on_final_req(&mut self, m: &ProtocolMessage, ctx: &Ctx, now: Timestamp) -> Res {
        use FailureReason::*;
        let s = wire::open(m, &self.keys, Role::Initiator).map_err(|_| (DecryptFailed, Duration::ZERO))?;
        if s.len() != 1 {
            return Err(malformed());
        }
        let auth_shared = self.auth_shared.expect("auth_shared set by the tier step");
        let gtk = self.secrets.as_ref().and_then(|s| s.gtk).expect("gtk set by the tier step");
        let id = self.peer_id.as_ref().map(|s| s.as_bytes());
        let so_i = build_signed_octets(&self.recv_octets, id, self.keys.sk_p(Role::Initiator), &self.n_r);
        if !ct_eq(&compute_final_auth(Role::Initiator, &so_i, &auth_shared, &gtk), &s[0]) {
            return Err((FinalAuthFailed, Duration::ZERO));
        }
        let so_r = build_signed_octets(&self.sent_octets, Some(ctx.cert_bytes), self.keys.sk_p(Role::Responder), &self.n_i);
        let auth_r = compute_final_auth(Role::Responder, &so_r, &auth_shared, &gtk);
        let out = self.send_sealed(MsgType::FinalAuthResp, &[&auth_r], now);
        self.ltk = Some(compute_long_term_secret(&auth_shared, &self.n_i, &self.n_r, &self.ids, now));
        self.phase = Phase::Established;
        self.deadline = None;
        self.secrets = None;
        Ok(vec![out])
    }
}
