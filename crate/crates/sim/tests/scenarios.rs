use locathe::protocol::{Disposition, FailureReason, MsgType, Phase, Tier};
use locathe_sim::scenarios::{self, *};
use locathe_sim::world::LogKind;
use locathe_sim::{run_scenario, Setup, SimError};

fn check(name: ScenarioName, seed: u64) -> locathe_sim::ScenarioOutcome {
    let (o, v) = run_catalog(name, seed);
    assert!(v.matched, "{name} seed {seed}: {} flags={:?} users={:?} sessions={:?}", v.detail, o.flags, o.users, o.responder_sessions);
    o
}

#[test]
fn every_catalog_entry_meets_its_expectation() {
    for name in catalog() {
        for seed in 0..3 {
            check(name, seed);
        }
    }
}

#[test]
fn same_seed_same_event_log() {
    for name in catalog() {
        let a = run_catalog(name, 9).0;
        let b = run_catalog(name, 9).0;
        assert_eq!(a.events, b.events, "{name}");
        assert_eq!(a.to_json(), b.to_json(), "{name}");
    }
}

#[test]
fn eavesdropper_sees_no_identity_in_any_tier() {
    for tier in Tier::ALL {
        let o = run_scenario(&scenarios::eavesdrop(4, tier)).unwrap();
        assert_eq!(o.user("bob").phase, Some(Phase::Established));
        assert!(!o.flags.any());
        assert!(!o.observations.identity_exposed, "{tier}");
    }
}

#[test]
fn mitm_fails_at_tier1_auth() {
    let o = check(ScenarioName::Mitm, 5);
    assert_eq!(o.responder_sessions[0].failure.unwrap().reason, FailureReason::AuthMismatch);
    assert_eq!(o.user("bob").failure.unwrap().phase, Phase::AwaitT1);
}

#[test]
fn mitm_against_tier2_only_exposes_the_identity_but_wins_nothing() {
    // Without a Tier 1 step the initiator sends ID_i before it has
    // authenticated the responder, so an active attacker reads it.
    let o = run_scenario(&scenarios::mitm(6, Tier::Two)).unwrap();
    assert!(!o.flags.any());
    assert!(o.observations.identity_exposed);
    assert_eq!(o.responder_sessions[0].failure.unwrap().reason, FailureReason::AuthTier2Mismatch);
    // With Tier 1 first, the responder rejects before any ID is sent.
    let o = run_scenario(&scenarios::mitm(6, Tier::Both)).unwrap();
    assert!(!o.flags.any());
    assert!(!o.observations.identity_exposed);
}

#[test]
fn tampered_bnonce_fails_signature_before_key_exchange() {
    let o = run_scenario(&scenarios::mitm_bnonce(7, Tier::One)).unwrap();
    assert_eq!(o.user("bob").failure.unwrap().reason, FailureReason::BadSignature);
    assert!(o.responder_sessions.is_empty());
    assert!(!o.events.iter().any(|e| e.msg_type == Some(MsgType::KeReq)));
}

#[test]
fn replay_b_duplicates_are_ignored() {
    let o = check(ScenarioName::ReplayB, 8);
    let ignored_adverts = o
        .events
        .iter()
        .filter(|e| e.kind == LogKind::Deliver && e.actor == "bob" && e.msg_type == Some(MsgType::Advert))
        .filter(|e| e.disposition == Some(Disposition::Ignore))
        .count();
    assert_eq!(ignored_adverts, 1);
    let ignored_ke = o
        .events
        .iter()
        .filter(|e| e.actor == "alice" && e.msg_type == Some(MsgType::KeReq) && e.disposition == Some(Disposition::Ignore))
        .count();
    assert_eq!(ignored_ke, 1);
}

#[test]
fn replay_a_small_and_large_delta() {
    for delta in [1, 1_000, 4_000] {
        let o = run_scenario(&scenarios::replay_a(10, delta)).unwrap();
        let v = Expectation::StaleNonceRejected.check(&o);
        assert!(v.matched, "delta {delta}: {}", v.detail);
    }
}

#[test]
fn wormhole_replay_with_identical_beacon_ids_still_fails() {
    let o = run_scenario(&scenarios::wormhole_replay(11, true)).unwrap();
    let v = Expectation::RemoteServiceRejects.check(&o);
    assert!(v.matched, "{}", v.detail);
    assert!(o.sessions_at("alice-p").any(|s| s.failure.is_some_and(|f| f.reason == FailureReason::AuthMismatch)));
}

#[test]
fn wormhole_extend_is_a_documented_limitation() {
    let o = check(ScenarioName::WormholeExtend, 12);
    assert!(o.observations.relayed_establishment);
    assert!(!o.flags.any());
}

#[test]
fn dos_flood_only_costs_detection() {
    let o = check(ScenarioName::Dos, 13);
    assert!(o.observations.ignored >= 100);
    assert!(o.observations.rejected >= 50);
    let base = run_scenario(&scenarios::eavesdrop(13, Tier::Both)).unwrap();
    let zero = run_scenario(&scenarios::dos(13, 0)).unwrap();
    assert_eq!(base.events, zero.events);
}

#[test]
fn dropping_ke_resp_times_out_without_a_win() {
    let mut s = Setup::standard(14, Tier::One);
    s.adversary.script.rules = vec![locathe_sim::Rule::new(locathe_sim::Match::msg(MsgType::KeResp), vec![locathe_sim::Action::Drop])];
    let o = run_scenario(&s).unwrap();
    assert_eq!(o.user("bob").failure.unwrap().reason, FailureReason::Timeout);
    assert!(!o.flags.any());
    assert!(o.events.iter().any(|e| e.kind == LogKind::Timeout));
}

#[test]
fn wrong_password_fails_at_final() {
    let mut s = Setup::standard(15, Tier::Two);
    s.users[0].wrong_password = true;
    let o = run_scenario(&s).unwrap();
    assert_eq!(o.responder_sessions[0].failure.unwrap().reason, FailureReason::FinalAuthFailed);
    assert_eq!(o.user("bob").failure.unwrap().phase.stage(), "final");
}

#[test]
fn setup_round_trips_through_json_and_validates() {
    for name in catalog() {
        let s = name.setup(3);
        let back: Setup = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
    let mut s = Setup::standard(1, Tier::One);
    s.users[0].location = "nowhere".into();
    assert!(matches!(run_scenario(&s), Err(SimError::ScenarioMisconfigured(_))));
    let mut s = Setup::standard(1, Tier::One);
    s.services[0].beacon_id = "xyz".into();
    assert!(run_scenario(&s).is_err());
}

#[test]
fn catalog_names_parse_and_exclude_jamming() {
    for n in catalog() {
        assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
    }
    assert!("jamming".parse::<ScenarioName>().is_err());
    assert!("bogus".parse::<ScenarioName>().is_err());
}
