//! Post-compromise reconstruction: given a recorded transcript and every
//! long-term secret of the user, try to rebuild the session keys.
//!
//! The attempt is deliberately generous. It recovers n_b through the ABE
//! keys, derives Kpwd and the Tier 1 GE scalar, and tries every scalar it
//! can form against every public point, plus the public points themselves,
//! as the ECDHE shared secret. Only the ephemeral scalars are out of reach.

use std::time::Duration;

use locathe::abe::{self, AbeCiphertext, UserAbeKey};
use locathe::crypto::{dh, GroupPoint, GroupScalar, TokenSeed};
use locathe::key_schedule::*;
use locathe::protocol::wire::{self, MsgType, ProtocolMessage, WireMessage};
use locathe::protocol::{BeaconConfig, ServiceAgent, Tier, TranscriptEntry, UserAgent};
use locathe::registration::ServiceRegistry;
use locathe::time::Timestamp;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::world::EPOCH;

/// Everything that outlives a session on the user side.
pub struct LongTermMaterial {
    pub user_key: [u8; 32],
    pub spwd: [u8; 32],
    pub token_seed: TokenSeed,
    pub abe_keys: Vec<UserAbeKey>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialResult {
    pub candidates: usize,
    /// Some candidate equals the true key schedule.
    pub matched: bool,
    /// Some candidate opens a recorded sealed message.
    pub decrypted: bool,
}

struct Public {
    ids: SessionIds,
    n_i: [u8; 32],
    n_r: [u8; 32],
    ke_i: GroupPoint,
    ke_r: GroupPoint,
    bnonce: Option<AbeCiphertext>,
    sealed: Vec<ProtocolMessage>,
}

fn parse(transcript: &[TranscriptEntry]) -> Option<Public> {
    let mut ke_req = None;
    let mut ke_resp = None;
    let mut bnonce = None;
    let mut sealed = Vec::new();
    for e in transcript {
        let Ok(WireMessage::Message(m)) = wire::decode(&e.hex) else { continue };
        match m.header.msg_type {
            MsgType::KeReq => ke_req = Some(m),
            MsgType::KeResp => ke_resp = Some(m),
            MsgType::BnonceFetchResp => bnonce = m.sections.get(1).and_then(|b| AbeCiphertext::from_bytes(b).ok()),
            t if t.is_encrypted() => sealed.push(m),
            _ => {}
        }
    }
    let (q, r) = (ke_req?, ke_resp?);
    Some(Public {
        ids: SessionIds::new(q.header.spi_i, r.header.spi_r).ok()?,
        n_i: q.sections.get(2)?.as_slice().try_into().ok()?,
        n_r: r.sections.first()?.as_slice().try_into().ok()?,
        ke_i: GroupPoint::decode_public(q.sections.get(3)?).ok()?,
        ke_r: GroupPoint::decode_public(r.sections.get(1)?).ok()?,
        bnonce,
        sealed,
    })
}

fn scalar_of(bytes: &[u8]) -> Option<GroupScalar> {
    let mut b = [0u8; 32];
    let n = bytes.len().min(32);
    b[..n].copy_from_slice(&bytes[..n]);
    GroupScalar::from_bytes_reduced(&b)
}

/// Every key schedule the oracle can build from the transcript, `ltm` and
/// any `extra` scalars (empty in a real trial; tests pass an ephemeral scalar
/// as a positive control).
pub fn reconstruct(
    transcript: &[TranscriptEntry],
    ltm: &LongTermMaterial,
    extra: &[GroupScalar],
    now: Timestamp,
) -> Vec<KeySchedule> {
    let Some(p) = parse(transcript) else { return Vec::new() };
    let n_b = p.bnonce.as_ref().and_then(|ct| abe::decrypt(&ltm.abe_keys, ct, now).ok());
    let mut scalars: Vec<GroupScalar> = extra.to_vec();
    let kpwd = derive_kpwd(&ltm.spwd, &p.n_i, &p.n_r, &p.ids);
    for bytes in [&ltm.user_key[..], &ltm.spwd[..], ltm.token_seed.seed(), kpwd.as_bytes()] {
        scalars.extend(scalar_of(bytes));
    }
    for k in &ltm.abe_keys {
        scalars.extend(k.share_bytes().filter_map(|s| scalar_of(s)));
    }
    if let Some(nb) = n_b.as_deref().and_then(|v| <[u8; 32]>::try_from(v).ok()) {
        scalars.extend(scalar_of(&nb));
        scalars.push(tier1_ge_scalar(&nb, &p.n_i, &p.n_r));
    }
    let points = [p.ke_i, p.ke_r, p.ke_i.add(&p.ke_r), GroupPoint::generator()];
    let mut shared: Vec<GroupPoint> = points.to_vec();
    for s in &scalars {
        for q in &points {
            shared.extend(dh(s, q).ok());
        }
    }
    shared
        .iter()
        .filter_map(|z| compute_keyseed(z, &p.n_i, &p.n_r).ok())
        .map(|seed| derive_sks(&seed, &p.n_i, &p.n_r, &p.ids))
        .collect()
}

fn opens_any(candidates: &[KeySchedule], sealed: &[ProtocolMessage]) -> bool {
    candidates.iter().any(|k| {
        sealed.iter().any(|m| {
            let sender = m.header.msg_type.sender().unwrap_or(Role::Initiator);
            wire::open(m, k, sender).is_ok()
        })
    })
}

/// One honest handshake, recorded, followed by full long-term compromise.
pub fn forward_secrecy_trial(seed: u64, tier: Tier) -> TrialResult {
    trial(seed, tier, false)
}

fn trial(seed: u64, tier: Tier, leak_ephemeral: bool) -> TrialResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut reg = ServiceRegistry::new("svc.example", &mut rng);
    reg.kdf_iterations = 16;
    reg.setup_authority("campus", &["staff", "guest"], &mut rng).expect("fresh authority");
    let attrs = ["campus:staff".parse().expect("attribute")].into_iter().collect();
    let bundle = reg.register_user("bob.rivera", &attrs, None, EPOCH, &mut rng).expect("fresh user");
    let user_key = *reg.lookup_user("bob.rivera", EPOCH).expect("registered").user_key();
    let shared = reg.into_shared();
    let policy = "campus:staff".parse().expect("policy");
    let mut svc = ServiceAgent::new(shared, BeaconConfig::new([0x5a; 8], "l", policy)).expect("config");
    let mut user = UserAgent::new(&bundle, tier).expect("bundle").with_audit(leak_ephemeral);

    let mut now = EPOCH;
    let mut queue = vec![(true, svc.tick(now, &mut rng).expect("tick"))];
    while let Some((to_user, b)) = (!queue.is_empty()).then(|| queue.remove(0)) {
        now = now + Duration::from_millis(2);
        let step = if to_user { user.handle(&b, now, &mut rng) } else { svc.handle(&b, now, &mut rng) };
        queue.extend(step.outgoing.into_iter().map(|o| (!to_user, o.bytes)));
    }
    let session = user.session().expect("session started");
    let truth = session.keys().expect("keys derived").clone();
    let recorded = session.transcript();
    let ltm = LongTermMaterial {
        user_key,
        spwd: bundle.spwd,
        token_seed: bundle.token_seed.clone(),
        abe_keys: bundle.abe_keys.clone(),
    };
    let extra: Vec<GroupScalar> = session.audit().and_then(|a| a.ephemeral).into_iter().collect();
    let candidates = reconstruct(recorded, &ltm, &extra, now);
    let sealed = parse(recorded).map(|p| p.sealed).unwrap_or_default();
    TrialResult {
        candidates: candidates.len(),
        matched: candidates.contains(&truth),
        decrypted: opens_any(&candidates, &sealed),
    }
}
