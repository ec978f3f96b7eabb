mod common;

use common::world::World;
use locathe::protocol::wire::{Header, MsgType, ProtocolMessage};
use locathe::protocol::*;
use proptest::prelude::*;

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

fn arb_message() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..96),
        (1u8..=12, any::<[u8; 8]>(), any::<[u8; 8]>(), 0u32..6, proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), 0..5))
            .prop_map(|(t, i, r, c, sections)| {
                let h = Header::new(MsgType::from_u8(t).unwrap(), i, r, c);
                ProtocolMessage::new(h, sections).to_bytes()
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Arbitrary input, interleaved with a live session, yields a defined
    /// disposition and never panics.
    #[test]
    fn both_roles_are_total(seed in 0u64..1000, junk in proptest::collection::vec(arb_message(), 1..12), tier_ix in 0usize..3) {
        let mut w = World::honest(seed);
        let mut u = w.user(Tier::ALL[tier_ix]);
        let mut live = vec![w.advert()];
        for (k, j) in junk.iter().enumerate() {
            let to_user = k % 2 == 0;
            let now = w.now;
            let step = if to_user { u.handle(j, now, &mut w.rng) } else { w.service.handle(j, now, &mut w.rng) };
            prop_assert!(matches!(step.disposition, Disposition::Process | Disposition::Ignore | Disposition::Reject));
            if let Some(b) = live.pop() {
                let s = if k % 2 == 0 { u.handle(&b, now, &mut w.rng) } else { w.service.handle(&b, now, &mut w.rng) };
                live.extend(s.outgoing.into_iter().map(|o| o.bytes));
            }
        }
        u.poll(w.now);
        w.service.poll(w.now);
    }
}

#[test]
fn wire_octets_never_carry_session_secrets() {
    for tier in Tier::ALL {
        for seed in 0..6 {
            let mut w = World::honest(300 + seed);
            let cfg = w.service.config().clone();
            w.service = ServiceAgent::new(w.registry.clone(), cfg).unwrap().with_audit(true);
            let mut u = w.user(tier).with_audit(true);
            let frames = w.pump(&mut u);
            let wire: Vec<u8> = frames.iter().flat_map(|f| f.bytes.clone()).collect();
            let i = u.session().unwrap();
            assert_eq!(i.phase(), Phase::Established);
            let r = w.service.session_for(&i.spi_i()).unwrap();
            let reg = w.registry.read().unwrap();
            let rec = reg.lookup_user("alice", w.now).unwrap();
            let mut secrets: Vec<Vec<u8>> = vec![rec.user_key().to_vec(), rec.spwd.to_vec()];
            secrets.extend(i.keys().unwrap().all_keys().iter().map(|k| k.as_bytes().to_vec()));
            for a in [i.audit().unwrap(), r.audit().unwrap()] {
                secrets.extend(a.n_b.map(|v| v.to_vec()));
                secrets.extend(a.kpwd.as_ref().map(|k| k.as_bytes().to_vec()));
                secrets.extend(a.s.map(|s| s.to_bytes().to_vec()));
                secrets.extend(a.tk.as_ref().map(|t| t.as_bytes().to_vec()));
                secrets.extend(a.gtk.map(|g| g.to_vec()));
                secrets.extend(a.ephemeral.map(|k| k.to_bytes().to_vec()));
                secrets.extend(a.lsk.map(|k| k.to_bytes().to_vec()));
            }
            for s in &secrets {
                assert!(!contains(&wire, s), "secret of {} octets on the wire ({tier}, seed {seed})", s.len());
            }
        }
    }
}
