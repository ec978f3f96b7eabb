//! One handshake between a user agent and a service agent over a lossless
//! in-memory medium. Time is virtual: every delivery advances it by 2 ms.

use std::time::Duration;

use locathe::abe::{AccessPolicy, AttributeSet};
use locathe::protocol::{
    BeaconConfig, Failure, Phase, ServiceAgent, Tier, TranscriptEntry, UserAgent,
};
use locathe::registration::{RegistrationBundle, ServiceRegistry, SharedRegistry};
use locathe::time::Timestamp;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const DEMO_BEACON_ID: [u8; 8] = [0xde, 0x40, 0, 0, 0, 0, 0, 0x01];
pub const DEMO_LOCATION: &str = "demo";
pub const DEMO_USER: &str = "demo.user";
pub const DEMO_ATTRIBUTES: [&str; 2] = ["campus:staff", "city:resident"];

const HOP: Duration = Duration::from_millis(2);

#[derive(Debug, Serialize)]
pub struct Side {
    pub phase: Phase,
    pub failure: Option<Failure>,
    pub ltk_fingerprint: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct DemoOutcome {
    pub tier: String,
    pub user_id: String,
    pub policy: String,
    pub initiator: Side,
    pub responder: Option<Side>,
    pub transcript: Vec<TranscriptEntry>,
}

impl DemoOutcome {
    pub fn established(&self) -> bool {
        self.initiator.phase == Phase::Established
            && self.responder.as_ref().is_some_and(|r| r.phase == Phase::Established)
    }

    /// Stage where the handshake stopped, preferring the side that detected
    /// the problem over the side that only received ERROR.
    pub fn failure_stage(&self) -> Option<&'static str> {
        let r = self.responder.as_ref().and_then(|r| r.failure);
        let i = self.initiator.failure;
        r.or(i).map(|f| f.phase.stage())
    }
}

/// A fresh registry with the default authorities and one registered user.
pub fn seeded_world(rng: &mut ChaCha20Rng, now: Timestamp) -> (ServiceRegistry, RegistrationBundle) {
    let mut reg = crate::new_registry(rng);
    let attrs: AttributeSet = DEMO_ATTRIBUTES.iter().map(|a| a.parse().expect("attribute")).collect();
    let bundle = reg.register_user(DEMO_USER, &attrs, None, now, rng).expect("fresh registry");
    (reg, bundle)
}

pub fn run(
    registry: SharedRegistry,
    user: UserAgent,
    policy: AccessPolicy,
    now: Timestamp,
    rng: &mut ChaCha20Rng,
) -> Result<DemoOutcome, String> {
    let tier = user.tier();
    let user_id = user.user_id().to_string();
    let cfg = BeaconConfig::new(DEMO_BEACON_ID, DEMO_LOCATION, policy.clone());
    let mut svc = ServiceAgent::new(registry, cfg).map_err(|e| e.to_string())?;
    let mut user = user;
    let mut now = now;
    let advert = svc.tick(now, rng).map_err(|e| e.to_string())?;
    let mut queue = vec![(true, advert, Duration::ZERO)];
    while !queue.is_empty() {
        let (to_user, bytes, delay) = queue.remove(0);
        now = now + delay + HOP;
        let step = if to_user { user.handle(&bytes, now, rng) } else { svc.handle(&bytes, now, rng) };
        queue.extend(step.outgoing.into_iter().map(|o| (!to_user, o.bytes, o.delay)));
    }
    // Let deadlines fire so a stalled side reports Timeout instead of idling.
    let late = now + Duration::from_secs(60);
    user.poll(late);
    svc.poll(late);

    let session = user.session().ok_or("no session started (policy not satisfied?)")?;
    let responder = svc.session_for(&session.spi_i()).map(|r| Side {
        phase: r.phase(),
        failure: r.failure(),
        ltk_fingerprint: r.long_term_secret().map(|l| l.fingerprint()),
    });
    Ok(DemoOutcome {
        tier: tier.to_string(),
        user_id,
        policy: policy.to_string(),
        initiator: Side {
            phase: session.phase(),
            failure: session.failure(),
            ltk_fingerprint: session.long_term_secret().map(|l| l.fingerprint()),
        },
        responder,
        transcript: session.transcript().to_vec(),
    })
}

/// Agent with the stored spwd perturbed, standing in for a mistyped password.
pub fn wrong_password(bundle: &RegistrationBundle, tier: Tier) -> Result<UserAgent, String> {
    let mut spwd = bundle.spwd;
    spwd[0] ^= 0x01;
    Ok(UserAgent::new(bundle, tier).map_err(|e| e.to_string())?.with_spwd(spwd))
}
