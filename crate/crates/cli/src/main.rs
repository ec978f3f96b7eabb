//! `locathe`: registry management, demo handshakes, adversary scenarios and
//! test vectors.
//!
//! Exit codes: 0 success, 1 scenario verdict mismatch, 2 already registered,
//! 3 I/O or format error, 4 handshake failure, 5 unknown scenario, 64 usage.
//! Secrets never reach stdout or stderr; only their fingerprints do.

mod demo;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, Subcommand, ValueEnum};
use locathe::abe::{AccessPolicy, AttributeSet};
use locathe::crypto::fingerprint;
use locathe::protocol::{Tier, UserAgent};
use locathe::registration::{RegistrationError, ServiceRegistry};
use locathe::time::Timestamp;
use locathe::vectors;
use locathe_sim::{run_catalog, run_scenario, ScenarioName, Setup};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

const DEFAULT_SERVICE_ID: &str = "locathe.local";
const DEFAULT_AUTHORITIES: [(&str, &[&str]); 2] =
    [("campus", &["staff", "student", "guest"]), ("city", &["resident", "visitor"])];
/// Fixed start time for self-contained demos, so transcripts repeat.
const DEMO_EPOCH: Timestamp = Timestamp::from_secs(1_700_000_000);

#[derive(Parser, Debug)]
#[command(name = "locathe", version, about = "Location-bound authenticated key exchange toolkit")]
struct Cli {
    /// Registry file.
    #[arg(long, global = true, env = "LOCATHE_REGISTRY", default_value = "locathe-registry.json")]
    registry: PathBuf,
    /// Fixes every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Destination for the primary output; `-` is stdout.
    #[arg(long, global = true, default_value = "-")]
    output: String,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Hex,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register a user; writes the bundle to --output (default `<id>.bundle.json`).
    Register {
        user_id: String,
        /// `authority:name`, repeatable or comma separated.
        #[arg(long = "attr", value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long)]
        password: Option<String>,
    },
    /// Run one handshake and print its transcript.
    Demo {
        #[arg(long, default_value = "both")]
        tier: Tier,
        /// Use this registered user instead of a throwaway registry.
        #[arg(long)]
        user: Option<String>,
        /// Bundle for --user; defaults to `<user>.bundle.json`.
        #[arg(long, requires = "user")]
        bundle: Option<PathBuf>,
        /// Required for bundles issued from a password.
        #[arg(long, requires = "user")]
        password: Option<String>,
        /// Service policy; defaults to AND over the user's attributes.
        #[arg(long)]
        policy: Option<String>,
        /// Test hook: perturb the stored password so final auth fails.
        #[arg(long)]
        wrong_password: bool,
    },
    /// Run a catalog scenario, or a scenario file, and print its outcome.
    Attack {
        #[arg(required_unless_present = "file")]
        scenario: Option<String>,
        #[arg(long, conflicts_with = "scenario")]
        file: Option<PathBuf>,
    },
    /// Emit hex test vectors, one per line.
    Vectors {
        /// Only this operation.
        filter: Option<String>,
        #[arg(long, default_value_t = 2)]
        per_op: usize,
    },
    /// List registry records without secret material.
    RegistryList,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Mismatch(String),
    #[error("user `{0}` is already registered")]
    AlreadyRegistered(String),
    #[error("{0}")]
    Io(String),
    #[error("handshake failed at stage {0}")]
    Handshake(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::AlreadyRegistered(_) => 2,
            CliError::Io(_) => 3,
            CliError::Handshake(_) => 4,
            CliError::UnknownScenario(_) => 5,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<RegistrationError> for CliError {
    fn from(e: RegistrationError) -> Self {
        match e {
            RegistrationError::AlreadyRegistered(id) => CliError::AlreadyRegistered(id),
            other => CliError::Io(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("locathe: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn rng_for(seed: Option<u64>) -> (u64, ChaCha20Rng) {
    let seed = seed.unwrap_or_else(|| rand_core::OsRng.next_u64());
    (seed, ChaCha20Rng::seed_from_u64(seed))
}

fn wall_clock() -> Timestamp {
    let d = SystemTime::now().duration_since(SystemTime::UNIX_EPOCH).unwrap_or_default();
    Timestamp::from_micros(d.as_micros() as u64)
}

pub(crate) fn new_registry(rng: &mut ChaCha20Rng) -> ServiceRegistry {
    let mut reg = ServiceRegistry::new(DEFAULT_SERVICE_ID, rng);
    for (id, universe) in DEFAULT_AUTHORITIES {
        reg.setup_authority(id, universe, rng).expect("fresh authority");
    }
    reg
}

fn emit(output: &str, body: &str) -> Result<(), CliError> {
    if output == "-" {
        let mut out = io::stdout().lock();
        out.write_all(body.as_bytes())?;
        if !body.is_empty() && !body.ends_with('\n') {
            out.write_all(b"\n")?;
        }
        Ok(())
    } else {
        fs::write(output, body).map_err(|e| CliError::Io(format!("{output}: {e}")))
    }
}

fn load_registry(path: &Path) -> Result<ServiceRegistry, CliError> {
    ServiceRegistry::load(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_attrs(raw: &[String]) -> Result<AttributeSet, CliError> {
    raw.iter()
        .map(|a| a.trim().parse().map_err(|e| CliError::Io(format!("attribute `{a}`: {e}"))))
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (seed, mut rng) = rng_for(cli.seed);
    match cli.command {
        Command::Register { user_id, attrs, password } => {
            let mut reg = if cli.registry.exists() { load_registry(&cli.registry)? } else { new_registry(&mut rng) };
            let attrs = parse_attrs(&attrs)?;
            let bundle = reg.register_user(&user_id, &attrs, password.as_deref().map(str::as_bytes), wall_clock(), &mut rng)?;
            let bundle_path = match cli.output.as_str() {
                "-" => PathBuf::from(format!("{user_id}.bundle.json")),
                p => PathBuf::from(p),
            };
            fs::write(&bundle_path, bundle.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", bundle_path.display())))?;
            reg.save(&cli.registry)?;
            let summary = serde_json::json!({
                "user_id": user_id,
                "bundle": bundle_path.display().to_string(),
                "spwd_fingerprint": fingerprint(&bundle.spwd),
                "expires_at": bundle.expires_at,
                "registry_records": reg.len(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            Ok(())
        }
        Command::Demo { tier, user, bundle, password, policy, wrong_password } => {
            let (registry, agent, default_policy, now) = match user {
                Some(id) => {
                    let reg = load_registry(&cli.registry)?;
                    let now = wall_clock();
                    let path = bundle.unwrap_or_else(|| PathBuf::from(format!("{id}.bundle.json")));
                    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    let b = locathe::registration::RegistrationBundle::from_json(&text)?;
                    if b.user_id != id {
                        return Err(CliError::Io(format!("bundle is for `{}`, not `{id}`", b.user_id)));
                    }
                    let rec = reg.lookup_user(&id, now)?;
                    let attrs: Vec<String> = rec.attributes.iter().map(|a| a.to_string()).collect();
                    let agent = match (wrong_password, password) {
                        (true, _) => demo::wrong_password(&b, tier).map_err(CliError::Io)?,
                        (false, Some(pw)) => UserAgent::new(&b, tier)?.with_password(&b, pw.as_bytes())?,
                        (false, None) => UserAgent::new(&b, tier)?,
                    };
                    let default_policy = match attrs.as_slice() {
                        [] => None,
                        [one] => Some(one.clone()),
                        many => Some(format!("AND({})", many.join(", "))),
                    };
                    (reg.into_shared(), agent, default_policy, now)
                }
                None => {
                    let (reg, b) = demo::seeded_world(&mut rng, DEMO_EPOCH);
                    let agent = if wrong_password { demo::wrong_password(&b, tier).map_err(CliError::Io)? } else { UserAgent::new(&b, tier)? };
                    (reg.into_shared(), agent, Some(format!("AND({})", demo::DEMO_ATTRIBUTES.join(", "))), DEMO_EPOCH)
                }
            };
            let policy_text = policy.or(default_policy).ok_or_else(|| CliError::Io("user has no attributes; pass --policy".into()))?;
            let policy: AccessPolicy = policy_text.parse().map_err(|e| CliError::Io(format!("policy: {e}")))?;
            let outcome = demo::run(registry, agent, policy, now, &mut rng).map_err(CliError::Handshake)?;
            let body = match cli.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&serde_json::json!({ "seed": seed, "outcome": outcome })).expect("json"),
                Format::Hex => outcome
                    .transcript
                    .iter()
                    .map(|e| format!("{}\t{}\t{}", serde_json::to_value(e.direction).expect("json").as_str().unwrap_or(""), e.msg_type, hex::encode(&e.hex)))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(&cli.output, &body)?;
            for (side, fp) in [("initiator", &outcome.initiator.ltk_fingerprint), ("responder", &outcome.responder.as_ref().and_then(|r| r.ltk_fingerprint.clone()))] {
                if let Some(fp) = fp {
                    eprintln!("{side} long-term secret fingerprint {fp}");
                }
            }
            if outcome.established() {
                eprintln!("established (tier {tier}, seed {seed})");
                Ok(())
            } else {
                Err(CliError::Handshake(outcome.failure_stage().unwrap_or("unknown").to_string()))
            }
        }
        Command::Attack { scenario, file } => {
            if let Some(path) = file {
                let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let mut setup: Setup = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                if let Some(s) = cli.seed {
                    setup.seed = s;
                }
                let outcome = run_scenario(&setup).map_err(|e| CliError::Io(e.to_string()))?;
                emit(&cli.output, &outcome.to_json())?;
                eprintln!("flags {}", serde_json::to_string(&outcome.flags).expect("json"));
                return Ok(());
            }
            let raw = scenario.unwrap_or_default();
            let name: ScenarioName = raw.parse().map_err(|_| CliError::UnknownScenario(raw.clone()))?;
            let (outcome, verdict) = run_catalog(name, seed);
            emit(&cli.output, &outcome.to_json())?;
            eprintln!("{name} seed {seed}: expected {:?}; {}", verdict.expected, verdict.detail);
            if verdict.matched {
                Ok(())
            } else {
                Err(CliError::Mismatch(format!("{name} did not meet its expected verdict")))
            }
        }
        Command::Vectors { filter, per_op } => {
            if let Some(f) = filter.as_deref().filter(|f| !vectors::NAMES.contains(f)) {
                eprintln!("locathe: no vectors named `{f}`; known: {}", vectors::NAMES.join(", "));
            }
            let vs = vectors::generate(&mut rng, per_op, filter.as_deref());
            let body = match cli.format.unwrap_or(Format::Hex) {
                Format::Hex => vs.iter().map(|v| v.line()).collect::<Vec<_>>().join("\n"),
                Format::Json => {
                    let rows: Vec<_> = vs
                        .iter()
                        .map(|v| {
                            serde_json::json!({
                                "name": v.name,
                                "inputs": v.inputs.iter().map(hex::encode).collect::<Vec<_>>(),
                                "output": hex::encode(&v.output),
                            })
                        })
                        .collect();
                    serde_json::to_string_pretty(&serde_json::json!({ "seed": seed, "vectors": rows })).expect("json")
                }
            };
            emit(&cli.output, &body)
        }
        Command::RegistryList => {
            let reg = load_registry(&cli.registry)?;
            let rows = reg.list(wall_clock());
            let body = match cli.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&rows).expect("json"),
                Format::Hex => rows
                    .iter()
                    .map(|r| format!("{}\t{}\t{}\t{}", r.user_id, r.attributes.join(","), r.expires_at, if r.active { "active" } else { "expired" }))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(&cli.output, &body)
        }
    }
}
