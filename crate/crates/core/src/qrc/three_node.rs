//! Three-node mode: a source and two stations that can talk only through
//! the mediator. Each round the source gets one message to each station,
//! after which the mediator refuses all routing and hands out settings.

use std::thread;
use std::time::Duration;

use serde_json::json;

use crate::chsh::observed_correlations;
use crate::lhv::LhvModel;
use crate::quantum::{canonical_angles, sample_run, AngleSet};
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};

use super::wire::{Incoming, LineChannel, Message};
use super::{
    draw_settings, observed_from_records, session_seeds, ChallengeConfig, ChallengeMode,
    ChallengeOutcome, QrcError, RoundRecord, SessionTranscript, Verdict,
};

pub struct ThreeNodeParties {
    pub source: LineChannel,
    pub alice: LineChannel,
    pub bob: LineChannel,
}

pub enum ThreeNodeBackend {
    Parties(ThreeNodeParties),
    /// Mediator self-test: outcomes come from a quantum oracle that sees the
    /// settings. Not a legitimate entry.
    QuantumOracle {
        angles: AngleSet,
        seed: RngSeed,
    },
}

fn describe(inc: &Incoming) -> String {
    match inc {
        Incoming::Message(m) => m.to_line(),
        Incoming::Garbled { line, .. } => line.clone(),
    }
}

/// Logs every line waiting on `ch` as a violation. Returns true if any.
fn drain_extras(ch: &mut LineChannel, round: usize, anomalies: &mut Vec<String>) -> bool {
    let extra = ch.drain();
    for line in &extra {
        anomalies.push(format!(
            "round {round}: unrouted message from {}: {line}",
            ch.label()
        ));
    }
    !extra.is_empty()
}

/// Receives until a message matching `want` arrives; anything else is logged
/// and voids the round.
fn await_message<T>(
    ch: &mut LineChannel,
    timeout: Duration,
    round: usize,
    anomalies: &mut Vec<String>,
    voided: &mut bool,
    want: impl Fn(&Message) -> Option<T>,
) -> Result<T, QrcError> {
    loop {
        let inc = ch.recv(timeout)?;
        if let Incoming::Message(Message::Abort { reason }) = &inc {
            return Err(QrcError::ChallengerFailure(format!(
                "{} aborted: {reason}",
                ch.label()
            )));
        }
        if let Incoming::Message(m) = &inc {
            if let Some(v) = want(m) {
                return Ok(v);
            }
        }
        anomalies.push(format!(
            "round {round}: unexpected message from {}: {}",
            ch.label(),
            describe(&inc)
        ));
        *voided = true;
    }
}

fn outcome_of(m: &Message) -> Option<i8> {
    match m {
        Message::Outcome { value } => Some(*value),
        _ => None,
    }
}

fn mediate_round(
    p: &mut ThreeNodeParties,
    round: usize,
    x: u8,
    y: u8,
    timeout: Duration,
    anomalies: &mut Vec<String>,
) -> Result<(i8, i8, bool), QrcError> {
    let mut voided = false;
    for ch in [&mut p.alice, &mut p.bob, &mut p.source] {
        voided |= drain_extras(ch, round, anomalies);
    }
    p.source.send(&Message::Emit { round })?;
    let (to_a, to_b) =
        await_message(
            &mut p.source,
            timeout,
            round,
            anomalies,
            &mut voided,
            |m| match m {
                Message::Emission { to_a, to_b } => Some((to_a.clone(), to_b.clone())),
                _ => None,
            },
        )?;
    p.alice.send(&Message::Deliver { payload: to_a })?;
    p.bob.send(&Message::Deliver { payload: to_b })?;
    // From here on nothing is routed between the parties.
    p.alice.send(&Message::Setting { bit: x })?;
    p.bob.send(&Message::Setting { bit: y })?;
    let a = await_message(
        &mut p.alice,
        timeout,
        round,
        anomalies,
        &mut voided,
        outcome_of,
    )?;
    let b = await_message(
        &mut p.bob,
        timeout,
        round,
        anomalies,
        &mut voided,
        outcome_of,
    )?;
    for (v, who) in [(a, "alice"), (b, "bob")] {
        if v != 1 && v != -1 {
            anomalies.push(format!("round {round}: {who} sent outcome {v}, not ±1"));
            voided = true;
        }
    }
    voided |= drain_extras(&mut p.source, round, anomalies);
    Ok((a, b, voided))
}

/// One three-node session with fresh settings from `settings_seed`.
pub fn run_three_node_session(
    backend: &mut ThreeNodeBackend,
    config: &ChallengeConfig,
    session: u64,
    settings_seed: RngSeed,
) -> Result<SessionTranscript, QrcError> {
    config.validate()?;
    let mut anomalies = Vec::new();
    let settings = draw_settings(config, &mut BellRng::new(settings_seed), &mut anomalies)?;
    let mut records = Vec::with_capacity(config.n);
    let challenger;
    match backend {
        ThreeNodeBackend::Parties(p) => {
            challenger = format!(
                "{} | {} | {}",
                p.source.label(),
                p.alice.label(),
                p.bob.label()
            );
            for (round, s) in settings.pairs().iter().enumerate() {
                let (a, b, voided) =
                    mediate_round(p, round, s.x, s.y, config.round_timeout, &mut anomalies)?;
                records.push(RoundRecord {
                    round,
                    x: s.x,
                    y: s.y,
                    row: None,
                    a_out: a,
                    b_out: b,
                    nonce: None,
                    seq: round as u64,
                    voided,
                });
            }
        }
        ThreeNodeBackend::QuantumOracle { angles, seed } => {
            challenger = "quantum-oracle (mediator test mode)".into();
            anomalies.push(
                "mediator test mode: outcomes from a quantum oracle with access to settings".into(),
            );
            let mut rng = BellRng::with_stream(*seed, MODEL_STREAM);
            for (round, s) in settings.pairs().iter().enumerate() {
                let (a, b) = sample_run(angles, s.x, s.y, &mut rng);
                records.push(RoundRecord {
                    round,
                    x: s.x,
                    y: s.y,
                    row: None,
                    a_out: a.value(),
                    b_out: b.value(),
                    nonce: None,
                    seq: round as u64,
                    voided: false,
                });
            }
        }
    }
    let summary = observed_correlations(&observed_from_records(&records))?;
    let win = summary.s > config.threshold;
    Ok(SessionTranscript {
        mode: ChallengeMode::ThreeNode,
        challenger,
        session,
        n: config.n,
        threshold: config.threshold,
        min_cell: config.min_cell,
        challenger_seed: None,
        settings_seed: settings_seed.0,
        records,
        summary,
        win,
        loophole_mode: false,
        loophole: None,
        anomalies,
    })
}

/// Runs `config.trials` sessions with a fresh backend from `connect`.
pub fn run_three_node_challenge<F>(
    mut connect: F,
    config: &ChallengeConfig,
    master: RngSeed,
) -> Result<ChallengeOutcome, QrcError>
where
    F: FnMut(u64, RngSeed) -> Result<ThreeNodeBackend, QrcError>,
{
    config.validate()?;
    let mut transcripts = Vec::with_capacity(config.trials);
    for i in 0..config.trials as u64 {
        let (cs, ss) = session_seeds(master, i);
        let mut backend = connect(i, cs)?;
        let mut t = run_three_node_session(&mut backend, config, i, ss)?;
        t.challenger_seed = Some(cs.0);
        transcripts.push(t);
    }
    let verdict = Verdict::from_sessions(transcripts.iter().map(|t| t.win), config)?;
    Ok(ChallengeOutcome {
        verdict,
        transcripts,
    })
}

/// Source loop: each `emit` draws a deterministic strategy and sends each
/// station its two outcomes as `{"out":[v0,v1]}`.
pub fn serve_lhv_source(
    ch: &mut LineChannel,
    model: &LhvModel,
    seed: RngSeed,
) -> Result<(), QrcError> {
    let mut rng = BellRng::with_stream(seed, MODEL_STREAM);
    loop {
        match ch.recv(Duration::from_secs(3600)) {
            Ok(Incoming::Message(Message::Emit { .. })) => {
                let s = model.sample(&mut rng);
                ch.send(&Message::Emission {
                    to_a: json!({ "out": [s.a0.value(), s.a1.value()] }),
                    to_b: json!({ "out": [s.b0.value(), s.b1.value()] }),
                })?;
            }
            Ok(_) => {}
            Err(QrcError::Disconnected(_)) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

/// Station loop: answers a setting with `out[bit]` from the last delivery.
/// With `collude_every = k > 0`, also tries to pass every k-th delivery on
/// via the mediator.
pub fn serve_lhv_station(ch: &mut LineChannel, collude_every: usize) -> Result<(), QrcError> {
    let mut out = [1i8, 1];
    let mut deliveries = 0usize;
    loop {
        match ch.recv(Duration::from_secs(3600)) {
            Ok(Incoming::Message(Message::Deliver { payload })) => {
                if let Some(v) = payload.get("out").and_then(|v| v.as_array()) {
                    for (k, e) in v.iter().take(2).enumerate() {
                        out[k] = e.as_i64().unwrap_or(1) as i8;
                    }
                }
                deliveries += 1;
                if collude_every > 0 && deliveries % collude_every == 0 {
                    ch.send(&Message::Deliver { payload })?;
                }
            }
            Ok(Incoming::Message(Message::Setting { bit })) => {
                ch.send(&Message::Outcome {
                    value: out[(bit & 1) as usize],
                })?;
            }
            Ok(_) => {}
            Err(QrcError::Disconnected(_)) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

/// Native triple on threads. With `collude_every > 0` Alice's station tries
/// to forward every k-th delivery it receives.
pub fn spawn_lhv_triple(
    model: LhvModel,
    seed: RngSeed,
    collude_every: usize,
) -> Result<ThreeNodeParties, QrcError> {
    let io = |e: std::io::Error| QrcError::ChallengerFailure(e.to_string());
    let (source, mut s_end) = LineChannel::pair("source", "mediator").map_err(io)?;
    let (alice, mut a_end) = LineChannel::pair("alice", "mediator").map_err(io)?;
    let (bob, mut b_end) = LineChannel::pair("bob", "mediator").map_err(io)?;
    thread::spawn(move || serve_lhv_source(&mut s_end, &model, seed));
    thread::spawn(move || serve_lhv_station(&mut a_end, collude_every));
    thread::spawn(move || serve_lhv_station(&mut b_end, 0));
    Ok(ThreeNodeParties { source, alice, bob })
}

/// Convenience for the self-test backend at the canonical angles.
pub fn quantum_oracle(seed: RngSeed) -> ThreeNodeBackend {
    ThreeNodeBackend::QuantumOracle {
        angles: canonical_angles(),
        seed,
    }
}
