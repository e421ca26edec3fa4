use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use anyhow::{bail, Result};
use bellkit::lhv::CheaterConfig;
use bellkit::qrc::challenger::{
    NativeLhvChallenger, ProcessChallenger, QuantumPseudoChallenger, SpreadsheetChallenger,
};
use bellkit::qrc::interactive::{
    play_interactive, CheaterClient, HonestLhvClient, InteractiveStrategy, MemoryClient,
};
use bellkit::qrc::probe::{
    consistency_probe, LhvReplay, ProcessReplay, ReplayOracle, SignallingReplay, SpreadsheetReplay,
    DEFAULT_PROBE_ROUNDS,
};
use bellkit::qrc::three_node::{
    quantum_oracle, spawn_lhv_triple, ThreeNodeBackend, ThreeNodeParties,
};
use bellkit::qrc::{
    run_interactive_challenge, run_spreadsheet_session, run_three_node_challenge, session_seeds,
    verify_determinism, ChallengeConfig, ChallengeMode, ChallengeOutcome, LineChannel, QrcError,
    SessionTranscript, Verdict,
};
use bellkit::{LhvModel, RngSeed};
use clap::{Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::simulate::{target_behavior, Target};
use super::{create, fmt_prob, resolve_seed};
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    which: Which,
}

#[derive(Debug, clap::Args)]
struct Common {
    #[arg(long, default_value_t = 800)]
    n: usize,
    #[arg(long, default_value_t = 99)]
    trials: usize,
    #[arg(long, default_value_t = 1.0 + std::f64::consts::SQRT_2)]
    threshold: f64,
    #[arg(long, default_value_t = 100)]
    min_cell: usize,
    /// Whole-table deadline (spreadsheet mode).
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    /// Per-message deadline (interactive and three-node modes).
    #[arg(long, default_value_t = 10_000)]
    round_timeout_ms: u64,
    #[arg(long, default_value_t = 16)]
    max_redraws: u32,
    #[arg(long, env = "BELLKIT_SEED")]
    seed: Option<u64>,
    /// Write every session transcript as NDJSON.
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

impl Common {
    fn config(&self, mode: ChallengeMode) -> ChallengeConfig {
        ChallengeConfig {
            n: self.n,
            trials: self.trials,
            threshold: self.threshold,
            min_cell: self.min_cell,
            mode,
            timeout: Duration::from_millis(self.timeout_ms),
            round_timeout: Duration::from_millis(self.round_timeout_ms),
            max_redraws: self.max_redraws,
            loophole: false,
            harness_test_mode: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NativeSpreadsheet {
    Lhv,
    QuantumPseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NativeInteractive {
    Lhv,
    Memory,
    Cheater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NativeTriple {
    Lhv,
    Colluding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NativeReplay {
    Lhv,
    Signalling,
    Spreadsheet,
}

#[derive(Debug, Subcommand)]
enum Which {
    /// Challenger prints an N×4 table for `--seed S --n N`; settings are drawn afterwards.
    Spreadsheet {
        /// Command line of the challenger program.
        #[arg(long, conflicts_with = "native", required_unless_present = "native")]
        challenger: Option<String>,
        #[arg(long, value_enum)]
        native: Option<NativeSpreadsheet>,
        /// Disclose settings to the challenger first. Harness testing only.
        #[arg(long)]
        harness_test_mode: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// One row per round over line-delimited JSON with commit-reveal settings.
    Interactive {
        /// Challenger program, spawned per session with `--seed S`, spoken to on stdio.
        #[arg(long, group = "who")]
        challenger: Option<String>,
        /// Address of a challenger listening on TCP; one connection per session.
        #[arg(long, group = "who")]
        connect: Option<String>,
        #[arg(long, value_enum, group = "who")]
        native: Option<NativeInteractive>,
        /// Accept no-detection entries and report efficiency-adjusted verdicts.
        #[arg(long)]
        loophole: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Source and two stations connected only through the mediator.
    ThreeNode {
        #[arg(long, requires_all = ["alice", "bob"], group = "who")]
        source: Option<String>,
        #[arg(long, requires = "source")]
        alice: Option<String>,
        #[arg(long, requires = "source")]
        bob: Option<String>,
        #[arg(long, value_enum, group = "who")]
        native: Option<NativeTriple>,
        /// Mediator self-test with a quantum oracle in place of the parties.
        #[arg(long, group = "who")]
        quantum_oracle: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run a spreadsheet challenger twice on one seed and once on another.
    Determinism {
        #[arg(long, conflicts_with = "native", required_unless_present = "native")]
        challenger: Option<String>,
        #[arg(long, value_enum)]
        native: Option<NativeSpreadsheet>,
        #[arg(long, default_value_t = 800)]
        n: usize,
        #[arg(long, default_value_t = 60_000)]
        timeout_ms: u64,
        #[arg(long, env = "BELLKIT_SEED")]
        seed: Option<u64>,
    },
    /// Replay rounds under all four setting pairs and check locality.
    Probe {
        /// Program answering `--seed S --round R --x X --y Y` with `a,b`.
        #[arg(long, conflicts_with = "native", required_unless_present = "native")]
        challenger: Option<String>,
        #[arg(long, value_enum)]
        native: Option<NativeReplay>,
        #[arg(long, default_value_t = DEFAULT_PROBE_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        #[arg(long, env = "BELLKIT_SEED")]
        seed: Option<u64>,
    },
}

fn split_command(cmd: &str) -> Result<(String, Vec<String>), QrcError> {
    let mut parts = cmd.split_whitespace().map(str::to_string);
    let prog = parts
        .next()
        .ok_or_else(|| QrcError::Config("empty challenger command".into()))?;
    Ok((prog, parts.collect()))
}

fn spawn_party(cmd: &str, seed: Option<RngSeed>, label: &str) -> Result<LineChannel, QrcError> {
    let (prog, args) = split_command(cmd)?;
    let mut c = Command::new(&prog);
    c.args(&args);
    if let Some(s) = seed {
        c.arg("--seed").arg(s.0.to_string());
    }
    let child = c
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| QrcError::ChallengerFailure(format!("{label}: cannot start {prog}: {e}")))?;
    LineChannel::from_child(child, label).map_err(|e| QrcError::ChallengerFailure(e.to_string()))
}

pub fn native_strategy(
    kind: NativeInteractive,
    seed: RngSeed,
) -> Result<Box<dyn InteractiveStrategy + Send>> {
    Ok(match kind {
        NativeInteractive::Lhv => {
            Box::new(HonestLhvClient::new(LhvModel::boundary_saturating(), seed))
        }
        NativeInteractive::Memory => Box::new(MemoryClient),
        NativeInteractive::Cheater => Box::new(CheaterClient::new(
            CheaterConfig::new(target_behavior(Target::Canonical))?,
            seed,
        )),
    })
}

fn native_channel(
    kind: NativeInteractive,
    seed: RngSeed,
    timeout: Duration,
) -> Result<LineChannel, QrcError> {
    let (referee, mut client) =
        LineChannel::pair(&format!("native-{kind:?}").to_lowercase(), "referee")
            .map_err(|e| QrcError::ChallengerFailure(e.to_string()))?;
    let mut strategy = native_strategy(kind, seed).map_err(|e| QrcError::Config(e.to_string()))?;
    std::thread::spawn(move || play_interactive(&mut client, strategy.as_mut(), timeout));
    Ok(referee)
}

#[derive(Serialize)]
struct SessionLine {
    session: u64,
    s: f64,
    se: f64,
    counts: [u64; 4],
    win: bool,
    anomalies: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    naive: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection_adjusted: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coincidence_adjusted: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
}

fn session_line(t: &SessionTranscript) -> SessionLine {
    let l = t.loophole.as_ref();
    SessionLine {
        session: t.session,
        s: t.summary.s,
        se: t.summary.se,
        counts: t.summary.counts,
        win: t.win,
        anomalies: t.anomalies.len(),
        naive: l.map(|r| r.naive.label()),
        detection_adjusted: l.map(|r| r.detection_adjusted.label()),
        coincidence_adjusted: l.map(|r| r.coincidence_adjusted.label()),
        gamma: l.map(|r| r.efficiency.gamma_hat),
    }
}

fn challenge_outcome(
    mode: &str,
    challenger: String,
    config: &ChallengeConfig,
    seed: RngSeed,
    out: ChallengeOutcome,
    transcripts: Option<&PathBuf>,
) -> Result<Outcome> {
    if let Some(p) = transcripts {
        use std::io::Write;
        let mut w = create(p)?;
        for t in &out.transcripts {
            writeln!(w, "{}", serde_json::to_string(t)?)?;
        }
        w.flush()?;
    }
    let v = &out.verdict;
    let lines: Vec<SessionLine> = out.transcripts.iter().map(session_line).collect();
    let mut t = Table::default();
    t.row("mode", mode)
        .row("challenger", &challenger)
        .row("seed", seed)
        .row(
            "sessions won",
            format!("{} of {}", v.sessions_won, v.sessions_total),
        )
        .row("verdict", if v.pass { "PASS" } else { "not passed" })
        .row(
            "per-session tail",
            format!(
                "{} ({})",
                fmt_prob(v.bound_note.report.probability),
                v.bound_note.label
            ),
        );
    let anomalies: usize = out.transcripts.iter().map(|t| t.anomalies.len()).sum();
    if anomalies > 0 {
        t.row("anomalies", anomalies);
    }
    let mut human = t.render();
    for l in &lines {
        human.push_str(&format!(
            "  session {:>3}  S={:.4}  se={:.4}  {}",
            l.session,
            l.s,
            l.se,
            if l.win { "win" } else { "-" }
        ));
        if let (Some(n), Some(d), Some(g)) = (l.naive, l.detection_adjusted, l.gamma) {
            human.push_str(&format!("  gamma={g:.3} naive={n} detection-adjusted={d}"));
        }
        human.push('\n');
    }
    let report = RunReport::new(
        &format!("qrc {mode}"),
        json!({ "challenger": challenger, "challenge": config }),
        Some(seed.0),
        json!({ "verdict": v, "sessions": lines }),
    );
    Ok(Outcome::ok(report, human))
}

fn spreadsheet_challenger(
    challenger: &Option<String>,
    native: Option<NativeSpreadsheet>,
    timeout: Duration,
) -> Result<Box<dyn SpreadsheetChallenger>> {
    Ok(match (challenger, native) {
        (Some(cmd), _) => Box::new(ProcessChallenger::from_command_line(cmd, timeout)?),
        (None, Some(NativeSpreadsheet::Lhv)) => Box::new(NativeLhvChallenger::default()),
        (None, Some(NativeSpreadsheet::QuantumPseudo)) => {
            Box::new(QuantumPseudoChallenger::default())
        }
        (None, None) => bail!("give --challenger or --native"),
    })
}

pub fn run(a: Args) -> Result<Outcome> {
    match a.which {
        Which::Spreadsheet {
            challenger,
            native,
            harness_test_mode,
            jobs,
            common,
        } => {
            let mut config = common.config(ChallengeMode::Spreadsheet);
            config.harness_test_mode = harness_test_mode;
            config.validate()?;
            let ch = spreadsheet_challenger(&challenger, native, config.timeout)?;
            let seed = resolve_seed(common.seed);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()?;
            let transcripts = pool.install(|| {
                (0..config.trials as u64)
                    .into_par_iter()
                    .map(|i| {
                        let (cs, ss) = session_seeds(seed, i);
                        run_spreadsheet_session(ch.as_ref(), &config, i, cs, ss)
                    })
                    .collect::<Result<Vec<_>, QrcError>>()
            })?;
            let verdict = Verdict::from_sessions(transcripts.iter().map(|t| t.win), &config)?;
            let out = ChallengeOutcome {
                verdict,
                transcripts,
            };
            challenge_outcome(
                "spreadsheet",
                ch.identity(),
                &config,
                seed,
                out,
                common.transcripts.as_ref(),
            )
        }
        Which::Interactive {
            challenger,
            connect,
            native,
            loophole,
            common,
        } => {
            let mut config = common.config(ChallengeMode::Interactive);
            config.loophole = loophole;
            config.validate()?;
            let seed = resolve_seed(common.seed);
            let rt = config.round_timeout;
            let (identity, out) = match (challenger, connect, native) {
                (Some(cmd), _, _) => (
                    cmd.clone(),
                    run_interactive_challenge(
                        |_, cs| spawn_party(&cmd, Some(cs), &cmd),
                        &config,
                        seed,
                    )?,
                ),
                (_, Some(addr), _) => (
                    format!("tcp:{addr}"),
                    run_interactive_challenge(
                        |_, _| {
                            let s = TcpStream::connect(&addr).map_err(|e| {
                                QrcError::ChallengerFailure(format!("connect {addr}: {e}"))
                            })?;
                            LineChannel::from_tcp(s, format!("tcp:{addr}"))
                                .map_err(|e| QrcError::ChallengerFailure(e.to_string()))
                        },
                        &config,
                        seed,
                    )?,
                ),
                (_, _, Some(kind)) => (
                    format!("native-{kind:?}").to_lowercase(),
                    run_interactive_challenge(|_, cs| native_channel(kind, cs, rt), &config, seed)?,
                ),
                _ => bail!("give --challenger, --connect or --native"),
            };
            challenge_outcome(
                "interactive",
                identity,
                &config,
                seed,
                out,
                common.transcripts.as_ref(),
            )
        }
        Which::ThreeNode {
            source,
            alice,
            bob,
            native,
            quantum_oracle: oracle,
            common,
        } => {
            let config = common.config(ChallengeMode::ThreeNode);
            config.validate()?;
            let seed = resolve_seed(common.seed);
            let (identity, out) = match (source, native, oracle) {
                (Some(src), _, _) => {
                    let (al, bo) = (alice.unwrap_or_default(), bob.unwrap_or_default());
                    let id = format!("{src} | {al} | {bo}");
                    let out = run_three_node_challenge(
                        |_, cs| {
                            Ok(ThreeNodeBackend::Parties(ThreeNodeParties {
                                source: spawn_party(&src, Some(cs), "source")?,
                                alice: spawn_party(&al, Some(cs), "alice")?,
                                bob: spawn_party(&bo, Some(cs), "bob")?,
                            }))
                        },
                        &config,
                        seed,
                    )?;
                    (id, out)
                }
                (_, Some(kind), _) => {
                    let collude = if kind == NativeTriple::Colluding {
                        3
                    } else {
                        0
                    };
                    let out = run_three_node_challenge(
                        |_, cs| {
                            Ok(ThreeNodeBackend::Parties(spawn_lhv_triple(
                                LhvModel::boundary_saturating(),
                                cs,
                                collude,
                            )?))
                        },
                        &config,
                        seed,
                    )?;
                    (format!("native-{kind:?}").to_lowercase(), out)
                }
                (_, _, true) => (
                    "quantum-oracle".to_string(),
                    run_three_node_challenge(|_, cs| Ok(quantum_oracle(cs)), &config, seed)?,
                ),
                _ => bail!("give --source/--alice/--bob, --native or --quantum-oracle"),
            };
            challenge_outcome(
                "three-node",
                identity,
                &config,
                seed,
                out,
                common.transcripts.as_ref(),
            )
        }
        Which::Determinism {
            challenger,
            native,
            n,
            timeout_ms,
            seed,
        } => {
            let ch =
                spreadsheet_challenger(&challenger, native, Duration::from_millis(timeout_ms))?;
            let seed = resolve_seed(seed);
            let check = verify_determinism(ch.as_ref(), seed, n)?;
            let mut t = Table::default();
            t.row("challenger", ch.identity())
                .row("seed", seed)
                .row("deterministic", check.deterministic)
                .row("seed-sensitive", check.seed_sensitive);
            for a in &check.anomalies {
                t.row("anomaly", a);
            }
            let report = RunReport::new(
                "qrc determinism",
                json!({ "challenger": ch.identity(), "n": n }),
                Some(seed.0),
                json!(check),
            );
            Ok(Outcome::ok(report, t.render()))
        }
        Which::Probe {
            challenger,
            native,
            rounds,
            timeout_ms,
            seed,
        } => {
            let seed = resolve_seed(seed);
            let lhv = NativeLhvChallenger::default();
            let oracle: Box<dyn ReplayOracle + '_> = match (&challenger, native) {
                (Some(cmd), _) => {
                    let (program, args) = split_command(cmd)?;
                    Box::new(ProcessReplay {
                        program: program.into(),
                        args,
                        timeout: Duration::from_millis(timeout_ms),
                    })
                }
                (None, Some(NativeReplay::Lhv)) => Box::new(LhvReplay {
                    model: LhvModel::boundary_saturating(),
                }),
                (None, Some(NativeReplay::Signalling)) => Box::new(SignallingReplay {
                    model: LhvModel::boundary_saturating(),
                }),
                (None, Some(NativeReplay::Spreadsheet)) => Box::new(SpreadsheetReplay {
                    challenger: &lhv,
                    n: rounds.max(1),
                }),
                (None, None) => bail!("give --challenger or --native"),
            };
            let r = consistency_probe(oracle.as_ref(), seed, rounds)?;
            let mut t = Table::default();
            t.row("challenger", &r.challenger)
                .row("seed", seed)
                .row("rounds probed", r.rounds_probed)
                .row(
                    "outcome",
                    serde_json::to_value(r.outcome)?
                        .as_str()
                        .unwrap_or_default(),
                );
            if let Some(n) = &r.note {
                t.row("note", n);
            }
            for i in r.inconsistencies.iter().take(10) {
                t.row("inconsistency", i);
            }
            let report = RunReport::new(
                "qrc probe",
                json!({ "challenger": r.challenger, "rounds": rounds }),
                Some(seed.0),
                json!(r),
            );
            Ok(Outcome::ok(report, t.render()))
        }
    }
}
