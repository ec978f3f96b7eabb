//! The user-agent side.

use std::collections::HashSet;

use rand_core::CryptoRngCore;
use zeroize::Zeroize;

use super::beacon::fetch_request;
use super::wire::{self, error_message, Advert, Header, MsgType, ProtocolMessage, WireMessage};
use super::{
    on_duplicate_or_stale, AuditRecord, Direction, Disposition, Failure, FailureReason, Outgoing, Phase, Step, Tier,
    TranscriptEntry, FACTOR_TOKEN, RESPONSE_TIMEOUT,
};
use crate::abe::{self, AbeCiphertext, UserAbeKey};
use crate::crypto::{ct_eq, ecdhe_keypair, totp, GroupPoint, GroupScalar, Signature, TokenSeed, VerifyingKey, NONCE_LEN};
use crate::key_schedule::*;
use crate::registration::{RegistrationBundle, RegistrationError};
use crate::time::Timestamp;

/// What the user agent holds after registration. Never leaves the agent.
#[derive(Clone)]
struct Credentials {
    user_id: String,
    spwd: [u8; 32],
    token_seed: TokenSeed,
    abe_keys: Vec<UserAbeKey>,
    service_id: String,
    service_key: VerifyingKey,
    token_skew_secs: i64,
    requests: Vec<u8>,
}

impl Drop for Credentials {
    fn drop(&mut self) {
        self.spwd.zeroize();
    }
}

/// Holds at most one session. Adverts are deduplicated by fetch handle and
/// ignored once a session exists.
pub struct UserAgent {
    creds: Credentials,
    tier: Tier,
    audit: bool,
    seen_handles: HashSet<[u8; 8]>,
    session: Option<InitiatorSession>,
}

impl UserAgent {
    pub fn new(bundle: &RegistrationBundle, tier: Tier) -> Result<Self, RegistrationError> {
        bundle.check_suite()?;
        let service_key = bundle.service_key()?;
        Ok(UserAgent {
            creds: Credentials {
                user_id: bundle.user_id.clone(),
                spwd: bundle.spwd,
                token_seed: bundle.token_seed.clone(),
                abe_keys: bundle.abe_keys.clone(),
                service_id: bundle.service_id.clone(),
                service_key,
                token_skew_secs: 0,
                requests: Vec::new(),
            },
            tier,
            audit: false,
            seen_handles: HashSet::new(),
            session: None,
        })
    }

    /// Recompute spwd from a typed password instead of the stored value.
    pub fn with_password(mut self, bundle: &RegistrationBundle, password: &[u8]) -> Result<Self, RegistrationError> {
        self.creds.spwd = bundle.spwd_from_password(password)?;
        Ok(self)
    }

    /// Test hook: run Tier 2 with an arbitrary spwd.
    pub fn with_spwd(mut self, spwd: [u8; 32]) -> Self {
        self.creds.spwd = spwd;
        self
    }

    /// Test hook: offset the token clock.
    pub fn with_token_skew(mut self, secs: i64) -> Self {
        self.creds.token_skew_secs = secs;
        self
    }

    /// Opaque Tier 1 "desired services" octets.
    pub fn with_requests(mut self, requests: Vec<u8>) -> Self {
        self.creds.requests = requests;
        self
    }

    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn user_id(&self) -> &str {
        &self.creds.user_id
    }

    pub fn session(&self) -> Option<&InitiatorSession> {
        self.session.as_ref()
    }

    pub fn phase(&self) -> Phase {
        self.session.as_ref().map_or(Phase::AwaitBroadcast, |s| s.phase)
    }

    pub fn next_deadline(&self) -> Option<Timestamp> {
        self.session.as_ref().and_then(|s| s.deadline)
    }

    pub fn handle(&mut self, bytes: &[u8], now: Timestamp, rng: &mut impl CryptoRngCore) -> Step {
        let msg = match wire::decode(bytes) {
            Ok(m) => m,
            Err(_) => return Step::reject(),
        };
        match msg {
            WireMessage::Advert(a) => self.on_advert(a, bytes, now, rng),
            WireMessage::Message(m) => match self.session.as_mut() {
                Some(s) => s.handle(m, bytes, &self.creds, now, rng),
                None if m.header.spi_i == [0; 8] => Step::ignore(),
                None => Step::reject(),
            },
        }
    }

    /// Fire the response timeout if it has passed.
    pub fn poll(&mut self, now: Timestamp) -> Step {
        match self.session.as_mut() {
            Some(s) if !s.phase.is_terminal() && s.deadline.is_some_and(|d| now >= d) => {
                Step::process(s.fail(FailureReason::Timeout, now))
            }
            _ => Step::ignore(),
        }
    }

    fn on_advert(&mut self, a: Advert, raw: &[u8], now: Timestamp, rng: &mut impl CryptoRngCore) -> Step {
        if !self.seen_handles.insert(a.handle) || self.session.is_some() {
            return Step::ignore();
        }
        let mut s = InitiatorSession::new(self.tier, a.handle, now, self.audit, rng);
        s.push(Direction::Received, MsgType::Advert, raw);
        let req = fetch_request(a.handle).to_bytes();
        s.push(Direction::Sent, MsgType::BnonceFetchReq, &req);
        s.deadline = Some(now + RESPONSE_TIMEOUT);
        self.session = Some(s);
        Step::process(vec![Outgoing::now(req)])
    }
}

/// Wiped when the session reaches a terminal phase.
struct Secrets {
    n_b: [u8; 32],
    ki: GroupScalar,
    shared: Option<GroupPoint>,
    lsk: Option<GroupScalar>,
    gtk: Option<[u8; 32]>,
}

impl Drop for Secrets {
    fn drop(&mut self) {
        self.n_b.zeroize();
        self.ki.zeroize();
        if let Some(l) = self.lsk.as_mut() {
            l.zeroize();
        }
        if let Some(g) = self.gtk.as_mut() {
            g.zeroize();
        }
    }
}

pub struct InitiatorSession {
    tier: Tier,
    phase: Phase,
    failure: Option<Failure>,
    handle: [u8; 8],
    spi_i: [u8; 8],
    spi_r: Option<[u8; 8]>,
    n_i: [u8; 32],
    n_r: [u8; 32],
    ke_r: Option<GroupPoint>,
    keys: Option<KeySchedule>,
    ge: Option<GroupPoint>,
    auth_shared: Option<GroupPoint>,
    ltk: Option<LongTermSecret>,
    cert_bytes: Vec<u8>,
    secrets: Option<Secrets>,
    send_counter: u32,
    recv_hw: u32,
    /// Octets this side sent from KE_REQ on; the SignedOctets base.
    sent_octets: Vec<u8>,
    /// Octets received from the responder, starting at BNONCE_FETCH_RESP.
    recv_octets: Vec<u8>,
    transcript: Vec<TranscriptEntry>,
    deadline: Option<Timestamp>,
    audit: Option<AuditRecord>,
    started_at: Timestamp,
}

type Res = Result<Vec<Outgoing>, FailureReason>;

fn arr<const N: usize>(b: &[u8]) -> Result<[u8; N], FailureReason> {
    b.try_into().map_err(|_| FailureReason::MalformedMessage)
}

fn point(b: &[u8]) -> Result<GroupPoint, FailureReason> {
    GroupPoint::decode_public(b).map_err(|_| FailureReason::MalformedMessage)
}

impl InitiatorSession {
    fn new(tier: Tier, handle: [u8; 8], now: Timestamp, audit: bool, rng: &mut impl CryptoRngCore) -> Self {
        InitiatorSession {
            tier,
            phase: Phase::AwaitFetch,
            failure: None,
            handle,
            spi_i: random_spi(rng),
            spi_r: None,
            n_i: [0; 32],
            n_r: [0; 32],
            ke_r: None,
            keys: None,
            ge: None,
            auth_shared: None,
            ltk: None,
            cert_bytes: Vec::new(),
            secrets: None,
            send_counter: 0,
            recv_hw: 0,
            sent_octets: Vec::new(),
            recv_octets: Vec::new(),
            transcript: Vec::new(),
            deadline: None,
            audit: audit.then(AuditRecord::default),
            started_at: now,
        }
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

    pub fn ids(&self) -> Option<SessionIds> {
        self.spi_r.and_then(|r| SessionIds::new(self.spi_i, r).ok())
    }

    pub fn spi_i(&self) -> [u8; 8] {
        self.spi_i
    }

    pub fn nonces(&self) -> ([u8; 32], [u8; 32]) {
        (self.n_i, self.n_r)
    }

    pub fn keys(&self) -> Option<&KeySchedule> {
        self.keys.as_ref()
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

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn audit(&self) -> Option<&AuditRecord> {
        self.audit.as_ref()
    }

    pub fn started_at(&self) -> Timestamp {
        self.started_at
    }

    /// True while ki, the shared secret, lsk or n_b are still held.
    pub fn holds_ephemeral_secrets(&self) -> bool {
        self.secrets.is_some()
    }

    fn push(&mut self, direction: Direction, msg_type: MsgType, bytes: &[u8]) {
        self.transcript.push(TranscriptEntry { direction, msg_type, hex: bytes.to_vec() });
    }

    fn fail(&mut self, reason: FailureReason, _now: Timestamp) -> Vec<Outgoing> {
        self.failure = Some(Failure { reason, phase: self.phase });
        self.phase = Phase::Failed;
        self.deadline = None;
        self.secrets = None;
        match (reason.error_class(), self.spi_r) {
            (Some(class), Some(spi_r)) => {
                self.send_counter += 1;
                let bytes = error_message(self.spi_i, spi_r, self.send_counter, class).to_bytes();
                self.push(Direction::Sent, MsgType::Error, &bytes);
                vec![Outgoing::now(bytes)]
            }
            _ => Vec::new(),
        }
    }

    fn handle(
        &mut self,
        m: ProtocolMessage,
        raw: &[u8],
        creds: &Credentials,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Step {
        let h = m.header;
        if h.spi_i == [0; 8] && h.spi_r == [0; 8] {
            return self.handle_sessionless(&m, raw, creds, now, rng);
        }
        // The responder only learns of us from KE_REQ.
        let visible = self.spi_r.is_some() || self.phase == Phase::AwaitKe;
        let spi_r_ok = match self.spi_r {
            Some(r) => r == h.spi_r,
            None => h.spi_r != [0; 8],
        };
        let known = visible && h.spi_i == self.spi_i && spi_r_ok;
        match on_duplicate_or_stale(known, self.recv_hw, h.counter) {
            Disposition::Process => {}
            d => return Step { disposition: d, outgoing: Vec::new() },
        }
        if self.phase.is_terminal() {
            return Step::ignore();
        }
        if h.msg_type == MsgType::Error {
            self.recv_hw = h.counter;
            self.push(Direction::Received, MsgType::Error, raw);
            return Step::process(self.fail(FailureReason::PeerError, now));
        }
        let expected = match self.phase {
            Phase::AwaitKe => MsgType::KeResp,
            Phase::AwaitT1 => MsgType::T1AuthResp,
            Phase::AwaitT2 => MsgType::T2Msg2,
            Phase::AwaitFinal => MsgType::FinalAuthResp,
            _ => return Step::ignore(),
        };
        if h.msg_type != expected {
            return Step::ignore();
        }
        self.recv_hw = h.counter;
        self.push(Direction::Received, h.msg_type, raw);
        let res = match expected {
            MsgType::KeResp => self.on_ke_resp(&m, raw, creds, now, rng),
            MsgType::T1AuthResp => self.on_t1_resp(&m, raw, creds, now, rng),
            MsgType::T2Msg2 => self.on_t2_msg2(&m, raw, creds, now),
            _ => self.on_final_resp(&m, now),
        };
        Step::process(res.unwrap_or_else(|r| self.fail(r, now)))
    }

    fn handle_sessionless(
        &mut self,
        m: &ProtocolMessage,
        raw: &[u8],
        creds: &Credentials,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Step {
        let ours = m.header.msg_type == MsgType::BnonceFetchResp
            && m.header.counter == 0
            && self.phase == Phase::AwaitFetch
            && m.sections.first().is_some_and(|s| s[..] == self.handle[..]);
        if !ours {
            // Other users' fetch traffic on the shared medium.
            return Step::ignore();
        }
        self.push(Direction::Received, MsgType::BnonceFetchResp, raw);
        let res = self.on_fetch_resp(m, raw, creds, now, rng);
        Step::process(res.unwrap_or_else(|r| self.fail(r, now)))
    }

    /// Verify the signature first, then the certificate, then open the BNONCE.
    fn on_fetch_resp(
        &mut self,
        m: &ProtocolMessage,
        raw: &[u8],
        creds: &Credentials,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Res {
        use FailureReason::*;
        if m.sections.len() != 4 {
            return Err(MalformedMessage);
        }
        let bnonce_bytes = &m.sections[1];
        let sig = Signature::from_bytes(&m.sections[2]).map_err(|_| BadSignature)?;
        if !creds.service_key.verify(bnonce_bytes, &sig) {
            return Err(BadSignature);
        }
        let cert = crate::registration::ServiceCertificate::from_bytes(&m.sections[3]).map_err(|_| MalformedMessage)?;
        if cert.public_key.to_bytes() != creds.service_key.to_bytes() || cert.service_id != creds.service_id {
            return Err(CertificateMismatch);
        }
        let ct = AbeCiphertext::from_bytes(bnonce_bytes).map_err(|_| MalformedMessage)?;
        let mut pt = abe::decrypt(&creds.abe_keys, &ct, now).map_err(|_| PolicyNotSatisfied)?;
        let n_b: Result<[u8; 32], _> = arr(&pt);
        pt.zeroize();
        let n_b = n_b?;

        self.recv_octets.extend_from_slice(raw);
        self.cert_bytes = m.sections[3].clone();
        let (ki, ke_i) = ecdhe_keypair(rng);
        self.n_i = random_nonce(rng);
        if let Some(a) = self.audit.as_mut() {
            a.n_b = Some(n_b);
            a.ephemeral = Some(ki);
        }
        self.secrets = Some(Secrets { n_b, ki, shared: None, lsk: None, gtk: None });

        self.send_counter = 1;
        let req = ProtocolMessage::new(
            Header::new(MsgType::KeReq, self.spi_i, [0; 8], self.send_counter),
            vec![vec![self.tier.octet()], self.handle.to_vec(), self.n_i.to_vec(), ke_i.encode().to_vec()],
        );
        let bytes = req.to_bytes();
        self.sent_octets.extend_from_slice(&bytes);
        self.push(Direction::Sent, MsgType::KeReq, &bytes);
        self.deadline = Some(now + RESPONSE_TIMEOUT);
        self.phase = Phase::AwaitKe;
        Ok(vec![Outgoing::now(bytes)])
    }

    fn on_ke_resp(
        &mut self,
        m: &ProtocolMessage,
        raw: &[u8],
        creds: &Credentials,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Res {
        use FailureReason::*;
        m.expect_sections(2).map_err(|_| MalformedMessage)?;
        let n_r: [u8; 32] = arr(&m.sections[0])?;
        let ke_r = point(&m.sections[1])?;
        let ids = SessionIds::new(self.spi_i, m.header.spi_r).map_err(|_| MalformedMessage)?;
        let secrets = self.secrets.as_mut().expect("secrets exist from AWAIT_KE on");
        let shared = crate::crypto::dh(&secrets.ki, &ke_r).map_err(|_| MalformedMessage)?;
        let mut keyseed = compute_keyseed(&shared, &self.n_i, &n_r).map_err(|_| MalformedMessage)?;
        let keys = derive_sks(&keyseed, &self.n_i, &n_r, &ids);
        keyseed.zeroize();
        secrets.shared = Some(shared);
        if let Some(a) = self.audit.as_mut() {
            a.shared = Some(shared);
        }
        self.spi_r = Some(ids.spi_r);
        self.n_r = n_r;
        self.ke_r = Some(ke_r);
        self.keys = Some(keys);
        self.recv_octets.extend_from_slice(raw);
        if self.tier.runs_tier1() {
            self.send_t1(creds, now, rng)
        } else {
            self.send_t2(creds, now, rng)
        }
    }

    fn send_sealed(&mut self, t: MsgType, sections: &[&[u8]], now: Timestamp) -> Outgoing {
        let keys = self.keys.as_ref().expect("keys derived before any sealed message");
        let spi_r = self.spi_r.expect("spi_r known before any sealed message");
        self.send_counter += 1;
        let h = Header::new(t, self.spi_i, spi_r, self.send_counter);
        let bytes = wire::seal(h, sections, keys, Role::Initiator).to_bytes();
        self.sent_octets.extend_from_slice(&bytes);
        self.push(Direction::Sent, t, &bytes);
        self.deadline = Some(now + RESPONSE_TIMEOUT);
        Outgoing::now(bytes)
    }

    fn send_t1(&mut self, creds: &Credentials, now: Timestamp, rng: &mut impl CryptoRngCore) -> Res {
        let keys = self.keys.as_ref().expect("keys");
        let secrets = self.secrets.as_mut().expect("secrets");
        let ke_r = self.ke_r.expect("ke_r");
        let so = build_signed_octets(&self.sent_octets, None, keys.sk_p(Role::Initiator), &self.n_r);
        let auth = compute_auth_tier1(Role::Initiator, &secrets.n_b, &self.n_i, &self.n_r, &ke_r, &so);
        let lpk = if self.tier == Tier::One {
            let shared = secrets.shared.expect("shared");
            let ge = compute_ge(&tier1_ge_scalar(&secrets.n_b, &self.n_i, &self.n_r), &shared)
                .map_err(|_| FailureReason::DegenerateGE)?;
            let (lsk, lpk) = tier2_keypair(&ge, rng);
            secrets.lsk = Some(lsk);
            if let Some(a) = self.audit.as_mut() {
                a.lsk = Some(lsk);
            }
            self.ge = Some(ge);
            lpk.encode().to_vec()
        } else {
            Vec::new()
        };
        let out = self.send_sealed(MsgType::T1AuthReq, &[&auth, &lpk, &creds.requests], now);
        self.phase = Phase::AwaitT1;
        Ok(vec![out])
    }

    fn on_t1_resp(
        &mut self,
        m: &ProtocolMessage,
        raw: &[u8],
        creds: &Credentials,
        now: Timestamp,
        rng: &mut impl CryptoRngCore,
    ) -> Res {
        use FailureReason::*;
        let keys = self.keys.as_ref().expect("keys");
        let secrets = self.secrets.as_mut().expect("secrets");
        let s = wire::open(m, keys, Role::Responder).map_err(|_| DecryptFailed)?;
        if s.len() != 4 {
            return Err(MalformedMessage);
        }
        let (auth_r, sig, cert, lpk_r) = (&s[0], &s[1], &s[2], &s[3]);
        if *cert != self.cert_bytes {
            return Err(CertificateMismatch);
        }
        let sig = Signature::from_bytes(sig).map_err(|_| BadSignature)?;
        if !creds.service_key.verify(auth_r, &sig) {
            return Err(BadSignature);
        }
        let so_r = build_signed_octets(&self.recv_octets, Some(cert), keys.sk_p(Role::Responder), &self.n_i);
        let expected =
            compute_auth_tier1(Role::Responder, &secrets.n_b, &self.n_i, &self.n_r, &self.ke_r.expect("ke_r"), &so_r);
        if !ct_eq(&expected, auth_r) {
            return Err(AuthMismatch);
        }
        self.recv_octets.extend_from_slice(raw);
        if self.tier == Tier::One {
            let lpk_r = point(lpk_r)?;
            let lsk = secrets.lsk.expect("tier 1 lsk");
            let auth_shared = compute_auth_shared_secret(&lsk, &lpk_r).map_err(|_| MalformedMessage)?;
            let gtk = compute_gtk(self.ge.as_ref().expect("tier 1 ge"), "");
            secrets.gtk = Some(gtk);
            if let Some(a) = self.audit.as_mut() {
                a.gtk = Some(gtk);
            }
            self.auth_shared = Some(auth_shared);
            self.send_final(creds, now)
        } else {
            if !lpk_r.is_empty() {
                return Err(MalformedMessage);
            }
            self.send_t2(creds, now, rng)
        }
    }

    fn send_t2(&mut self, creds: &Credentials, now: Timestamp, rng: &mut impl CryptoRngCore) -> Res {
        let ids = self.ids().expect("ids");
        let keys = self.keys.as_ref().expect("keys");
        let secrets = self.secrets.as_mut().expect("secrets");
        let s = GroupScalar::random(rng);
        let mut nonce12 = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce12);
        let kpwd = derive_kpwd(&creds.spwd, &self.n_i, &self.n_r, &ids);
        let enonce = make_enonce(&kpwd, &s, &nonce12);
        if let Some(a) = self.audit.as_mut() {
            a.kpwd = Some(kpwd.clone());
            a.s = Some(s);
        }
        let t2 = Tier2State::new(&creds.spwd, kpwd, s, &secrets.shared.expect("shared"), rng)
            .map_err(|_| FailureReason::DegenerateGE)?;
        let sk_pi = keys.sk_p(Role::Initiator);
        let so = build_signed_octets(&self.sent_octets, Some(creds.user_id.as_bytes()), sk_pi, &self.n_r);
        let auth = compute_auth_tier2(&secrets.n_b, &so, sk_pi);
        secrets.lsk = Some(t2.lsk);
        if let Some(a) = self.audit.as_mut() {
            a.lsk = Some(t2.lsk);
        }
        self.ge = Some(t2.ge);
        let lpk = t2.lpk.encode();
        let out =
            self.send_sealed(MsgType::T2Msg1, &[&nonce12, &enonce, creds.user_id.as_bytes(), &auth, &lpk], now);
        self.phase = Phase::AwaitT2;
        Ok(vec![out])
    }

    fn on_t2_msg2(&mut self, m: &ProtocolMessage, raw: &[u8], creds: &Credentials, now: Timestamp) -> Res {
        use FailureReason::*;
        let keys = self.keys.as_ref().expect("keys");
        let secrets = self.secrets.as_mut().expect("secrets");
        let s = wire::open(m, keys, Role::Responder).map_err(|_| DecryptFailed)?;
        if s.len() != 3 {
            return Err(MalformedMessage);
        }
        if s[0] != self.cert_bytes {
            return Err(CertificateMismatch);
        }
        let lpk_r = point(&s[1])?;
        let mut token = false;
        for factor in s[2].split(|b| *b == b',').filter(|f| !f.is_empty()) {
            if factor != FACTOR_TOKEN {
                return Err(MissingFactor);
            }
            token = true;
        }
        let lsk = secrets.lsk.expect("tier 2 lsk");
        let auth_shared = compute_auth_shared_secret(&lsk, &lpk_r).map_err(|_| MalformedMessage)?;
        let mut tk = if token { totp(&creds.token_seed, now.offset_secs(creds.token_skew_secs)) } else { String::new() };
        let gtk = compute_gtk(self.ge.as_ref().expect("tier 2 ge"), &tk);
        if let Some(a) = self.audit.as_mut() {
            a.tk = Some(tk.clone());
            a.gtk = Some(gtk);
        }
        tk.zeroize();
        secrets.gtk = Some(gtk);
        self.auth_shared = Some(auth_shared);
        self.recv_octets.extend_from_slice(raw);
        self.send_final(creds, now)
    }

    fn send_final(&mut self, creds: &Credentials, now: Timestamp) -> Res {
        let keys = self.keys.as_ref().expect("keys");
        let id = self.tier.runs_tier2().then_some(creds.user_id.as_bytes());
        let so = build_signed_octets(&self.sent_octets, id, keys.sk_p(Role::Initiator), &self.n_r);
        let gtk = self.secrets.as_ref().and_then(|s| s.gtk).expect("gtk");
        let auth = compute_final_auth(Role::Initiator, &so, self.auth_shared.as_ref().expect("auth_shared"), &gtk);
        let out = self.send_sealed(MsgType::FinalAuthReq, &[&auth], now);
        self.phase = Phase::AwaitFinal;
        Ok(vec![out])
    }

    fn on_final_resp(&mut self, m: &ProtocolMessage, now: Timestamp) -> Res {
        use FailureReason::*;
        let keys = self.keys.as_ref().expect("keys");
        let s = wire::open(m, keys, Role::Responder).map_err(|_| DecryptFailed)?;
        if s.len() != 1 {
            return Err(MalformedMessage);
        }
        let auth_shared = self.auth_shared.expect("auth_shared");
        let gtk = self.secrets.as_ref().and_then(|s| s.gtk).expect("gtk");
        let so_r = build_signed_octets(&self.recv_octets, Some(&self.cert_bytes), keys.sk_p(Role::Responder), &self.n_i);
        let expected = compute_final_auth(Role::Responder, &so_r, &auth_shared, &gtk);
        if !ct_eq(&expected, &s[0]) {
            return Err(FinalAuthFailed);
        }
        let ids = self.ids().expect("ids");
        self.ltk = Some(compute_long_term_secret(&auth_shared, &self.n_i, &self.n_r, &ids, now));
        self.phase = Phase::Established;
        self.deadline = None;
        self.secrets = None;
        Ok(Vec::new())
    }
}
