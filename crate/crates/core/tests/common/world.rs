//! In-memory pump between one user and one service; no adversary.

use std::time::Duration;

use locathe::abe::{AccessPolicy, Attribute, AttributeSet};
use locathe::protocol::{BeaconConfig, Phase, ServiceAgent, Step, Tier, UserAgent};
use locathe::registration::{RegistrationBundle, ServiceRegistry, SharedRegistry};
use locathe::time::Timestamp;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

pub const T0: Timestamp = Timestamp::from_secs(1_700_000_000);

pub struct World {
    pub rng: ChaCha20Rng,
    pub registry: SharedRegistry,
    pub service: ServiceAgent,
    pub bundle: RegistrationBundle,
    pub now: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    User,
    Service,
}

/// One message on the medium, for tests that tamper.
pub struct Frame {
    pub to: Side,
    pub bytes: Vec<u8>,
}

pub fn attrs(names: &[&str]) -> AttributeSet {
    names.iter().map(|s| s.parse::<Attribute>().unwrap()).collect()
}

impl World {
    pub fn new(seed: u64, policy: &str, user_attrs: &[&str]) -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut reg = ServiceRegistry::new("svc.example", &mut rng);
        reg.kdf_iterations = 10;
        reg.setup_authority("campus", &["staff", "student", "guest"], &mut rng).unwrap();
        reg.setup_authority("city", &["resident", "visitor"], &mut rng).unwrap();
        let bundle = reg.register_user("alice", &attrs(user_attrs), None, T0, &mut rng).unwrap();
        let registry = reg.into_shared();
        let policy: AccessPolicy = policy.parse().unwrap();
        let service = ServiceAgent::new(registry.clone(), BeaconConfig::new([0xb1; 8], "lobby", policy)).unwrap();
        World { rng, registry, service, bundle, now: T0 }
    }

    pub fn honest(seed: u64) -> World {
        World::new(seed, "AND(campus:staff, city:resident)", &["campus:staff", "city:resident"])
    }

    pub fn user(&self, tier: Tier) -> UserAgent {
        UserAgent::new(&self.bundle, tier).unwrap()
    }

    pub fn advert(&mut self) -> Vec<u8> {
        self.service.tick(self.now, &mut self.rng).unwrap()
    }

    /// Deliver everything until quiet, passing each frame through `tap`
    /// (which may rewrite or drop it). Returns every frame that was delivered.
    pub fn pump_with(
        &mut self,
        user: &mut UserAgent,
        mut tap: impl FnMut(usize, &mut Frame) -> bool,
    ) -> Vec<Frame> {
        let first = self.advert();
        let mut queue = vec![Frame { to: Side::User, bytes: first }];
        let mut delivered = Vec::new();
        let mut n = 0;
        while let Some(mut f) = (!queue.is_empty()).then(|| queue.remove(0)) {
            let keep = tap(n, &mut f);
            n += 1;
            if !keep {
                continue;
            }
            self.now = self.now + Duration::from_millis(3);
            let step: Step = match f.to {
                Side::User => user.handle(&f.bytes, self.now, &mut self.rng),
                Side::Service => self.service.handle(&f.bytes, self.now, &mut self.rng),
            };
            let back = if f.to == Side::User { Side::Service } else { Side::User };
            for o in step.outgoing {
                self.now = self.now + o.delay;
                queue.push(Frame { to: back, bytes: o.bytes });
            }
            delivered.push(f);
        }
        delivered
    }

    pub fn pump(&mut self, user: &mut UserAgent) -> Vec<Frame> {
        self.pump_with(user, |_, _| true)
    }

    pub fn service_phase(&self) -> Option<Phase> {
        self.service.sessions().next().map(|s| s.phase())
    }
}
