//! Interactive mode: one row per round against committed, secret settings.

use std::time::Duration;

use crate::chsh::observed_correlations;
use crate::events::{analyze, PairingResult};
use crate::lhv::{cheater_run, CheaterConfig, LhvModel};
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};
use crate::table::Sign;

use super::wire::{commit_hash, Incoming, LineChannel, Message};
use super::{
    draw_settings, observed_from_records, session_seeds, session_win, ChallengeConfig,
    ChallengeMode, ChallengeOutcome, QrcError, RoundRecord, SessionTranscript, Verdict,
    NONCE_STREAM,
};

fn nonce(rng: &mut BellRng) -> String {
    format!("{:016x}{:016x}", rng.next_u64(), rng.next_u64())
}

/// Waits for the next decodable message; anything undecodable is a
/// violation and an `abort` is a challenger failure.
fn expect_message(
    ch: &mut LineChannel,
    timeout: Duration,
    round: Option<usize>,
) -> Result<Message, QrcError> {
    match ch.recv(timeout)? {
        Incoming::Message(Message::Abort { reason }) => Err(QrcError::ChallengerFailure(format!(
            "{} aborted: {reason}",
            ch.label()
        ))),
        Incoming::Message(m) => Ok(m),
        Incoming::Garbled { line, error } => Err(QrcError::violation(
            round,
            format!("undecodable message {line:?}: {error}"),
        )),
    }
}

fn check_row(values: [i8; 4], loophole: bool, round: usize) -> Result<(), QrcError> {
    let ok = values
        .iter()
        .all(|&v| v == 1 || v == -1 || (loophole && v == 0));
    if ok {
        Ok(())
    } else if !loophole && values.contains(&0) {
        Err(QrcError::violation(
            Some(round),
            format!("row {values:?} contains a no-detection entry outside loophole mode"),
        ))
    } else {
        Err(QrcError::violation(
            Some(round),
            format!("malformed row {values:?}"),
        ))
    }
}

/// Referee side of one interactive session.
///
/// The full settings sequence is drawn up front from `settings_seed` (so
/// every cell reaches `min_cell`) and kept secret; each round's pair is
/// committed before the row is requested and revealed after.
pub fn run_interactive_session(
    ch: &mut LineChannel,
    config: &ChallengeConfig,
    session: u64,
    settings_seed: RngSeed,
) -> Result<SessionTranscript, QrcError> {
    let result = referee(ch, config, session, settings_seed);
    if let Err(e) = &result {
        if e.exit_code() == 2 {
            let _ = ch.send(&Message::Abort {
                reason: e.to_string(),
            });
        }
    }
    result
}

fn referee(
    ch: &mut LineChannel,
    config: &ChallengeConfig,
    session: u64,
    settings_seed: RngSeed,
) -> Result<SessionTranscript, QrcError> {
    config.validate()?;
    let mut anomalies = Vec::new();
    let settings = draw_settings(config, &mut BellRng::new(settings_seed), &mut anomalies)?;
    let mut nonces = BellRng::with_stream(settings_seed, NONCE_STREAM);
    let mut seq = 0u64;
    let timeout = config.round_timeout;

    ch.send(&Message::Hello {
        n: config.n,
        session,
        loophole: config.loophole,
    })?;
    seq += 1;

    let mut records = Vec::with_capacity(config.n);
    for (round, p) in settings.pairs().iter().enumerate() {
        let nonce = nonce(&mut nonces);
        ch.send(&Message::Commit {
            hash: commit_hash(p.x, p.y, &nonce),
        })?;
        seq += 1;
        let values = match expect_message(ch, timeout, Some(round))? {
            Message::Row { a, ap, b, bp } => [a, ap, b, bp],
            other => {
                return Err(QrcError::violation(
                    Some(round),
                    format!("expected row, got {}", other.kind()),
                ))
            }
        };
        seq += 1;
        check_row(values, config.loophole, round)?;
        let mut rec = RoundRecord::from_row(round, p.x, p.y, values, seq);
        rec.nonce = Some(nonce.clone());
        records.push(rec);
        ch.send(&Message::Reveal {
            x: p.x,
            y: p.y,
            nonce,
        })?;
        seq += 1;
    }

    let summary = observed_correlations(&observed_from_records(&records))?;
    let loophole = if config.loophole {
        match analyze(&clocked_pairing(&records)) {
            Ok(r) => Some(r),
            Err(e) => {
                anomalies.push(format!("loophole analysis unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let win = session_win(
        &summary,
        config.threshold,
        config.loophole,
        loophole.as_ref(),
    );
    ch.send(&Message::Result { s: summary.s, win })?;

    Ok(SessionTranscript {
        mode: ChallengeMode::Interactive,
        challenger: ch.label().to_string(),
        session,
        n: config.n,
        threshold: config.threshold,
        min_cell: config.min_cell,
        challenger_seed: None,
        settings_seed: settings_seed.0,
        records,
        summary,
        win,
        loophole_mode: config.loophole,
        loophole,
        anomalies,
    })
}

fn detected(v: i8) -> Option<Sign> {
    match v {
        1 => Some(Sign::Plus),
        -1 => Some(Sign::Minus),
        _ => None,
    }
}

pub(crate) fn clocked_pairing(records: &[RoundRecord]) -> PairingResult {
    let rounds: Vec<_> = records
        .iter()
        .filter(|r| !r.voided)
        .map(|r| (r.x, r.y, detected(r.a_out), detected(r.b_out)))
        .collect();
    PairingResult::clocked(&rounds)
}

/// Runs `config.trials` sessions, opening a fresh channel per session with
/// `connect(session, challenger_seed)`.
pub fn run_interactive_challenge<F>(
    mut connect: F,
    config: &ChallengeConfig,
    master: RngSeed,
) -> Result<ChallengeOutcome, QrcError>
where
    F: FnMut(u64, RngSeed) -> Result<LineChannel, QrcError>,
{
    config.validate()?;
    let mut transcripts = Vec::with_capacity(config.trials);
    for i in 0..config.trials as u64 {
        let (cs, ss) = session_seeds(master, i);
        let mut ch = connect(i, cs)?;
        let mut t = run_interactive_session(&mut ch, config, i, ss)?;
        t.challenger_seed = Some(cs.0);
        ch.close();
        transcripts.push(t);
    }
    let verdict = Verdict::from_sessions(transcripts.iter().map(|t| t.win), config)?;
    Ok(ChallengeOutcome {
        verdict,
        transcripts,
    })
}

/// A challenger's policy in interactive mode.
pub trait InteractiveStrategy {
    fn start(&mut self, n: usize, session: u64, loophole: bool);

    /// Row `(A, A′, B, B′)` for `round`; `history` holds every revealed
    /// setting pair so far. `0` marks no detection.
    fn next_row(&mut self, round: usize, history: &[(u8, u8)]) -> [i8; 4];
}

/// What a client saw at the end of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub rounds: usize,
    pub s: f64,
    pub win: bool,
}

/// Client side: answers commits with rows and audits every reveal.
pub fn play_interactive(
    ch: &mut LineChannel,
    strategy: &mut dyn InteractiveStrategy,
    timeout: Duration,
) -> Result<ClientReport, QrcError> {
    let (n, loophole) = match expect_message(ch, timeout, None)? {
        Message::Hello {
            n,
            session,
            loophole,
        } => {
            strategy.start(n, session, loophole);
            (n, loophole)
        }
        other => {
            return Err(QrcError::violation(
                None,
                format!("expected hello, got {}", other.kind()),
            ))
        }
    };
    let _ = loophole;
    let mut history = Vec::with_capacity(n);
    loop {
        let round = history.len();
        let hash = match expect_message(ch, timeout, Some(round))? {
            Message::Commit { hash } => hash,
            Message::Result { s, win } => {
                return Ok(ClientReport {
                    rounds: round,
                    s,
                    win,
                })
            }
            other => {
                return Err(QrcError::violation(
                    Some(round),
                    format!("expected commit or result, got {}", other.kind()),
                ))
            }
        };
        let [a, ap, b, bp] = strategy.next_row(round, &history);
        ch.send(&Message::Row { a, ap, b, bp })?;
        match expect_message(ch, timeout, Some(round))? {
            Message::Reveal { x, y, nonce } => {
                if x > 1 || y > 1 || commit_hash(x, y, &nonce) != hash {
                    let reason =
                        format!("round {round}: reveal ({x},{y}) does not open commitment {hash}");
                    let _ = ch.send(&Message::Abort {
                        reason: reason.clone(),
                    });
                    return Err(QrcError::AuditFailure(reason));
                }
                history.push((x, y));
            }
            other => {
                return Err(QrcError::violation(
                    Some(round),
                    format!("expected reveal, got {}", other.kind()),
                ))
            }
        }
    }
}

/// Draws a fresh deterministic strategy from the model each round.
#[derive(Debug, Clone)]
pub struct HonestLhvClient {
    pub model: LhvModel,
    pub seed: RngSeed,
    rng: BellRng,
}

impl HonestLhvClient {
    pub fn new(model: LhvModel, seed: RngSeed) -> Self {
        HonestLhvClient {
            model,
            seed,
            rng: BellRng::with_stream(seed, MODEL_STREAM),
        }
    }
}

impl InteractiveStrategy for HonestLhvClient {
    fn start(&mut self, _n: usize, _session: u64, _loophole: bool) {
        self.rng = BellRng::with_stream(self.seed, MODEL_STREAM);
    }

    fn next_row(&mut self, _round: usize, _history: &[(u8, u8)]) -> [i8; 4] {
        self.model.sample(&mut self.rng).row().values()
    }
}

/// Uses the revealed history: each round plays a `+2` deterministic row
/// whose one disagreeing cell is the most frequent pair so far, where a
/// wrong entry costs least. Local, with memory.
#[derive(Debug, Clone, Default)]
pub struct MemoryClient;

impl InteractiveStrategy for MemoryClient {
    fn start(&mut self, _n: usize, _session: u64, _loophole: bool) {}

    fn next_row(&mut self, round: usize, history: &[(u8, u8)]) -> [i8; 4] {
        let mut counts = [0usize; 4];
        for &(x, y) in history {
            counts[2 * x as usize + y as usize] += 1;
        }
        let common = (0..4).max_by_key(|&c| (counts[c], c)).unwrap_or(round % 4);
        match common {
            0 => [1, -1, -1, 1],
            1 => [1, 1, 1, -1],
            2 => [1, -1, 1, 1],
            _ => [1, 1, 1, 1],
        }
    }
}

/// The undetected-particle cheater over the interactive wire. Needs the
/// referee's loophole mode; strict referees reject its `0` entries.
#[derive(Debug, Clone)]
pub struct CheaterClient {
    pub config: CheaterConfig,
    pub seed: RngSeed,
    rng: BellRng,
}

impl CheaterClient {
    pub fn new(config: CheaterConfig, seed: RngSeed) -> Self {
        CheaterClient {
            config,
            seed,
            rng: BellRng::with_stream(seed, MODEL_STREAM),
        }
    }
}

impl InteractiveStrategy for CheaterClient {
    fn start(&mut self, _n: usize, _session: u64, _loophole: bool) {
        self.rng = BellRng::with_stream(self.seed, MODEL_STREAM);
    }

    fn next_row(&mut self, _round: usize, _history: &[(u8, u8)]) -> [i8; 4] {
        // The draws do not depend on the settings, so replaying the same
        // state under each setting yields a well-defined ternary row.
        let state = self.rng.save();
        let mut row = [0i8; 4];
        for s in 0..2u8 {
            let mut r = BellRng::restore(&state);
            row[s as usize] = cheater_run(&self.config, s, 0, &mut r).0.value();
            let mut r = BellRng::restore(&state);
            row[2 + s as usize] = cheater_run(&self.config, 0, s, &mut r).1.value();
        }
        cheater_run(&self.config, 0, 0, &mut self.rng);
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::quantum_behavior;
    use crate::quantum::canonical_angles;
    use std::thread;

    fn serve<S: InteractiveStrategy + Send + 'static>(
        mut strategy: S,
    ) -> (
        LineChannel,
        thread::JoinHandle<Result<ClientReport, QrcError>>,
    ) {
        let (referee, mut client) = LineChannel::pair("challenger", "referee").unwrap();
        let h = thread::spawn(move || {
            play_interactive(&mut client, &mut strategy, Duration::from_secs(10))
        });
        (referee, h)
    }

    fn small() -> ChallengeConfig {
        ChallengeConfig {
            n: 200,
            min_cell: 20,
            mode: ChallengeMode::Interactive,
            ..Default::default()
        }
    }

    #[test]
    fn honest_session_completes_and_replays() {
        let c = small();
        let (mut ch, h) = serve(HonestLhvClient::new(
            LhvModel::boundary_saturating(),
            RngSeed(4),
        ));
        let t = run_interactive_session(&mut ch, &c, 0, RngSeed(9)).unwrap();
        let client = h.join().unwrap().unwrap();
        assert_eq!(client.rounds, 200);
        assert_eq!(client.s, t.summary.s);
        assert_eq!(t.records.len(), 200);
        assert!(t.records.iter().all(|r| r.nonce.is_some()));
        assert_eq!(t.recompute().unwrap(), (t.summary.clone(), t.win));
        // logical clock strictly increases
        assert!(t.records.windows(2).all(|w| w[0].seq < w[1].seq));

        let (mut ch2, h2) = serve(HonestLhvClient::new(
            LhvModel::boundary_saturating(),
            RngSeed(4),
        ));
        let t2 = run_interactive_session(&mut ch2, &c, 0, RngSeed(9)).unwrap();
        h2.join().unwrap().unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn settings_request_before_row_is_a_violation() {
        let (mut ch, mut client) = LineChannel::pair("challenger", "referee").unwrap();
        let h = thread::spawn(move || {
            let _hello = client.recv(Duration::from_secs(5)).unwrap();
            let _commit = client.recv(Duration::from_secs(5)).unwrap();
            client.send_line(r#"{"type":"settings_request"}"#).unwrap();
            client.recv(Duration::from_secs(5)).unwrap()
        });
        let e = run_interactive_session(&mut ch, &small(), 0, RngSeed(1)).unwrap_err();
        assert!(
            matches!(e, QrcError::ProtocolViolation { round: Some(0), .. }),
            "{e}"
        );
        assert_eq!(e.exit_code(), 2);
        assert!(matches!(
            h.join().unwrap(),
            Incoming::Message(Message::Abort { .. })
        ));

        // a well-formed but out-of-order message is rejected too
        let (mut ch, mut client) = LineChannel::pair("challenger", "referee").unwrap();
        thread::spawn(move || {
            let _ = client.recv(Duration::from_secs(5));
            let _ = client.recv(Duration::from_secs(5));
            client
                .send(&Message::Reveal {
                    x: 0,
                    y: 0,
                    nonce: "x".into(),
                })
                .unwrap();
            let _ = client.recv(Duration::from_secs(5));
        });
        let e = run_interactive_session(&mut ch, &small(), 0, RngSeed(1)).unwrap_err();
        assert!(e.to_string().contains("expected row, got reveal"), "{e}");
    }

    #[test]
    fn silent_challenger_times_out() {
        let (mut ch, _client) = LineChannel::pair("challenger", "referee").unwrap();
        let c = ChallengeConfig {
            round_timeout: Duration::from_millis(50),
            ..small()
        };
        let e = run_interactive_session(&mut ch, &c, 0, RngSeed(1)).unwrap_err();
        assert!(matches!(e, QrcError::Timeout { .. }));
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn client_detects_a_lying_referee() {
        let (mut referee, mut client) = LineChannel::pair("challenger", "referee").unwrap();
        let h = thread::spawn(move || {
            let mut s = HonestLhvClient::new(LhvModel::uniform(), RngSeed(1));
            play_interactive(&mut client, &mut s, Duration::from_secs(5))
        });
        referee
            .send(&Message::Hello {
                n: 1,
                session: 0,
                loophole: false,
            })
            .unwrap();
        referee
            .send(&Message::Commit {
                hash: commit_hash(0, 0, "n"),
            })
            .unwrap();
        let _row = referee.recv(Duration::from_secs(5)).unwrap();
        referee
            .send(&Message::Reveal {
                x: 1,
                y: 0,
                nonce: "n".into(),
            })
            .unwrap();
        let e = h.join().unwrap().unwrap_err();
        assert!(matches!(e, QrcError::AuditFailure(_)), "{e}");
    }

    #[test]
    fn memory_client_rows_saturate_fact_one() {
        let mut m = MemoryClient;
        for h in [
            vec![],
            vec![(0, 0)],
            vec![(0, 1)],
            vec![(1, 0)],
            vec![(1, 1)],
        ] {
            let r = m.next_row(h.len(), &h);
            let row = crate::table::CounterfactualRow::from_values(r);
            assert_eq!(crate::chsh::row_chsh_term(&row), 2);
        }
    }

    #[test]
    fn memory_client_gains_nothing() {
        let c = ChallengeConfig { n: 800, ..small() };
        let mut total = 0.0;
        for i in 0..10 {
            let (mut ch, h) = serve(MemoryClient);
            total += run_interactive_session(&mut ch, &c, i, RngSeed(100 + i))
                .unwrap()
                .summary
                .s;
            h.join().unwrap().unwrap();
        }
        assert!(total / 10.0 < 2.15, "mean s {}", total / 10.0);
    }

    #[test]
    fn cheater_rows_match_the_batch_cheater() {
        let cfg = CheaterConfig::new(quantum_behavior(&canonical_angles())).unwrap();
        let mut client = CheaterClient::new(cfg, RngSeed(3));
        let mut rng = BellRng::with_stream(RngSeed(3), MODEL_STREAM);
        for round in 0..200 {
            let row = client.next_row(round, &[]);
            let (x, y) = ((round % 2) as u8, (round / 2 % 2) as u8);
            let (a, b) = cheater_run(&cfg, x, y, &mut rng);
            assert_eq!(
                (row[x as usize], row[2 + y as usize]),
                (a.value(), b.value())
            );
            // exactly one detectable entry per wing
            assert_eq!(row[..2].iter().filter(|v| **v != 0).count(), 1);
            assert_eq!(row[2..].iter().filter(|v| **v != 0).count(), 1);
        }
    }

    #[test]
    fn cheater_is_rejected_in_strict_mode_and_caught_in_loophole_mode() {
        let cfg = CheaterConfig::new(quantum_behavior(&canonical_angles())).unwrap();
        let (mut ch, h) = serve(CheaterClient::new(cfg, RngSeed(3)));
        let e = run_interactive_session(&mut ch, &small(), 0, RngSeed(5)).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
        let _ = h.join();

        let c = ChallengeConfig {
            n: 4000,
            min_cell: 100,
            loophole: true,
            ..small()
        };
        let (mut ch, h) = serve(CheaterClient::new(cfg, RngSeed(3)));
        let t = run_interactive_session(&mut ch, &c, 0, RngSeed(5)).unwrap();
        h.join().unwrap().unwrap();
        assert_eq!(t.recompute().unwrap(), (t.summary.clone(), t.win));
        assert!(t.summary.s > c.threshold && !t.win);
        let report = t.loophole.expect("loophole analysis");
        assert!(report.naive.violated);
        assert!(!report.detection_adjusted.violated);
        assert!(
            (report.efficiency.gamma_hat - 0.5).abs() < 0.06,
            "{}",
            report.efficiency.gamma_hat
        );
    }
}
