//! Deterministic broadcast-medium simulator with a scriptable adversary.
//!
//! A run is a pure function of its [`Setup`]: every endpoint and the
//! adversary draw from their own seeded ChaCha20 stream, and time is virtual.

pub mod adversary;
pub mod clock;
pub mod oracle;
pub mod scenarios;
pub mod script;
pub mod world;

pub use scenarios::{catalog, run_catalog, Expectation, ScenarioName, Verdict};
pub use script::{Action, AdversaryScript, AdversarySpec, Match, Rule, Setup, Transform};
pub use world::{run_scenario, GoalFlags, Observations, ScenarioOutcome, SimError};
