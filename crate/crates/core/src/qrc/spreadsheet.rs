//! Spreadsheet mode: the challenger commits to a whole table first, then the
//! referee draws settings.

use serde::{Deserialize, Serialize};

use crate::chsh::observed_correlations;
use crate::rng::{BellRng, RngSeed};
use crate::table::CounterfactualTable;
use crate::Error;

use super::challenger::{SpreadsheetChallenger, TableRequest};
use super::{
    draw_settings, session_seeds, ChallengeConfig, ChallengeMode, ChallengeOutcome, QrcError,
    RoundRecord, SessionTranscript, Verdict,
};

/// Parses a challenger's CSV and checks it has exactly `n` rows.
pub fn parse_challenger_table(bytes: &[u8], n: usize) -> Result<CounterfactualTable, QrcError> {
    let table = match CounterfactualTable::read_csv(bytes) {
        Ok(t) => t,
        Err(Error::EmptyTable) => {
            return Err(QrcError::WrongRowCount {
                expected: n,
                got: 0,
            })
        }
        Err(e) => return Err(QrcError::MalformedTable(e.to_string())),
    };
    if table.n() != n {
        return Err(QrcError::WrongRowCount {
            expected: n,
            got: table.n(),
        });
    }
    Ok(table)
}

/// One spreadsheet session. Settings come from `settings_seed` and are drawn
/// only after the table has been received, except in harness test mode.
pub fn run_spreadsheet_session(
    challenger: &dyn SpreadsheetChallenger,
    config: &ChallengeConfig,
    session: u64,
    challenger_seed: RngSeed,
    settings_seed: RngSeed,
) -> Result<SessionTranscript, QrcError> {
    config.validate()?;
    let mut anomalies = Vec::new();
    let mut rng = BellRng::new(settings_seed);

    let leaked = if config.harness_test_mode {
        anomalies.push("harness test mode: settings disclosed to the challenger before its table (non-compliant)".into());
        Some(draw_settings(config, &mut rng, &mut anomalies)?)
    } else if challenger.needs_settings() {
        return Err(QrcError::Unsupported(format!(
            "{} needs settings in advance; only allowed in harness test mode",
            challenger.identity()
        )));
    } else {
        None
    };

    let bytes = challenger.produce_table(&TableRequest {
        seed: challenger_seed,
        n: config.n,
        leaked_settings: leaked.as_ref(),
    })?;
    let table = parse_challenger_table(&bytes, config.n)?;

    let settings = match leaked {
        Some(s) => s,
        None => draw_settings(config, &mut rng, &mut anomalies)?,
    };

    let records: Vec<RoundRecord> = table
        .rows()
        .iter()
        .zip(settings.pairs())
        .enumerate()
        .map(|(i, (row, p))| RoundRecord::from_row(i, p.x, p.y, row.values(), i as u64))
        .collect();
    let summary = observed_correlations(&super::observed_from_records(&records))?;
    let win = summary.s > config.threshold;
    Ok(SessionTranscript {
        mode: ChallengeMode::Spreadsheet,
        challenger: challenger.identity(),
        session,
        n: config.n,
        threshold: config.threshold,
        min_cell: config.min_cell,
        challenger_seed: Some(challenger_seed.0),
        settings_seed: settings_seed.0,
        records,
        summary,
        win,
        loophole_mode: false,
        loophole: None,
        anomalies,
    })
}

/// Runs `config.trials` sessions with seeds derived from `master`.
pub fn run_spreadsheet_challenge(
    challenger: &dyn SpreadsheetChallenger,
    config: &ChallengeConfig,
    master: RngSeed,
) -> Result<ChallengeOutcome, QrcError> {
    config.validate()?;
    let mut transcripts = Vec::with_capacity(config.trials);
    for i in 0..config.trials as u64 {
        let (cs, ss) = session_seeds(master, i);
        transcripts.push(run_spreadsheet_session(challenger, config, i, cs, ss)?);
    }
    let verdict = Verdict::from_sessions(transcripts.iter().map(|t| t.win), config)?;
    Ok(ChallengeOutcome {
        verdict,
        transcripts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterminismCheck {
    /// Two runs with the same seed gave byte-identical tables.
    pub deterministic: bool,
    /// A different seed changed the table.
    pub seed_sensitive: bool,
    pub anomalies: Vec<String>,
}

/// Runs the challenger twice with `(seed, n)` and once with a different seed.
pub fn verify_determinism(
    challenger: &dyn SpreadsheetChallenger,
    seed: RngSeed,
    n: usize,
) -> Result<DeterminismCheck, QrcError> {
    let req = |s| TableRequest {
        seed: s,
        n,
        leaked_settings: None,
    };
    let first = challenger.produce_table(&req(seed))?;
    let second = challenger.produce_table(&req(seed))?;
    let other = challenger.produce_table(&req(RngSeed(seed.0.wrapping_add(1))))?;
    let deterministic = first == second;
    let seed_sensitive = other != first;
    let mut anomalies = Vec::new();
    if !deterministic {
        anomalies.push("identical inputs produced different tables".into());
    }
    if deterministic && !seed_sensitive {
        anomalies.push("output does not depend on the seed argument".into());
    }
    Ok(DeterminismCheck {
        deterministic,
        seed_sensitive,
        anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qrc::{NativeLhvChallenger, QuantumPseudoChallenger};
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Fixed(Vec<u8>);

    impl SpreadsheetChallenger for Fixed {
        fn identity(&self) -> String {
            "fixed".into()
        }
        fn produce_table(&self, _: &TableRequest<'_>) -> Result<Vec<u8>, QrcError> {
            Ok(self.0.clone())
        }
    }

    /// Stands in for a clock-seeded program.
    struct Drifting(AtomicU64);

    impl SpreadsheetChallenger for Drifting {
        fn identity(&self) -> String {
            "drifting".into()
        }
        fn produce_table(&self, req: &TableRequest<'_>) -> Result<Vec<u8>, QrcError> {
            let tick = self.0.fetch_add(1, Ordering::SeqCst);
            NativeLhvChallenger::default().produce_table(&TableRequest {
                seed: RngSeed(tick),
                ..*req
            })
        }
    }

    fn rows(n: usize) -> Vec<u8> {
        let mut s = String::from("A,Ap,B,Bp\n");
        for _ in 0..n {
            s.push_str("1,1,1,1\n");
        }
        s.into_bytes()
    }

    #[test]
    fn wrong_row_count_is_reported() {
        let c = ChallengeConfig::default();
        let e =
            run_spreadsheet_session(&Fixed(rows(799)), &c, 0, RngSeed(1), RngSeed(2)).unwrap_err();
        assert!(e.to_string().contains("wrong row count"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e =
            run_spreadsheet_session(&Fixed(rows(0)), &c, 0, RngSeed(1), RngSeed(2)).unwrap_err();
        assert!(matches!(e, QrcError::WrongRowCount { got: 0, .. }));
    }

    #[test]
    fn malformed_table_is_a_violation() {
        let c = ChallengeConfig::default();
        let e = run_spreadsheet_session(
            &Fixed(b"A,Ap,B,Bp\n1,2,1,1\n".to_vec()),
            &c,
            0,
            RngSeed(1),
            RngSeed(2),
        )
        .unwrap_err();
        assert!(matches!(e, QrcError::MalformedTable(_)), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn constant_table_gives_s_two_and_respects_min_cell() {
        let c = ChallengeConfig::default();
        let t = run_spreadsheet_session(&Fixed(rows(800)), &c, 0, RngSeed(1), RngSeed(2)).unwrap();
        assert_eq!(t.summary.s, 2.0);
        assert!(!t.win);
        assert!(t.summary.counts.iter().all(|&k| k >= 100));
        assert_eq!(t.recompute().unwrap(), (t.summary.clone(), t.win));
    }

    #[test]
    fn pseudo_challenger_needs_harness_mode() {
        let c = ChallengeConfig::default();
        let e = run_spreadsheet_session(
            &QuantumPseudoChallenger::default(),
            &c,
            0,
            RngSeed(1),
            RngSeed(2),
        );
        assert!(matches!(e, Err(QrcError::Unsupported(_))));
        let c = ChallengeConfig {
            harness_test_mode: true,
            ..c
        };
        let t = run_spreadsheet_session(
            &QuantumPseudoChallenger::default(),
            &c,
            0,
            RngSeed(1),
            RngSeed(2),
        )
        .unwrap();
        assert!(t.anomalies.iter().any(|a| a.contains("non-compliant")));
        assert!(t.summary.s > 2.4, "{}", t.summary.s);
    }

    #[test]
    fn transcript_replays_exactly() {
        let c = ChallengeConfig {
            trials: 3,
            ..Default::default()
        };
        let out =
            run_spreadsheet_challenge(&NativeLhvChallenger::default(), &c, RngSeed(11)).unwrap();
        let again =
            run_spreadsheet_challenge(&NativeLhvChallenger::default(), &c, RngSeed(11)).unwrap();
        assert_eq!(out, again);
        for t in &out.transcripts {
            let (summary, win) = t.recompute().unwrap();
            assert_eq!(summary, t.summary);
            assert_eq!(win, t.win);
            let json = serde_json::to_string(t).unwrap();
            let back: SessionTranscript = serde_json::from_str(&json).unwrap();
            assert_eq!(&back, t);
        }
    }

    #[test]
    fn determinism_checks() {
        let lhv = verify_determinism(&NativeLhvChallenger::default(), RngSeed(3), 50).unwrap();
        assert!(lhv.deterministic && lhv.seed_sensitive && lhv.anomalies.is_empty());

        let drift = verify_determinism(&Drifting(AtomicU64::new(0)), RngSeed(3), 50).unwrap();
        assert!(!drift.deterministic);

        let fixed = verify_determinism(&Fixed(rows(50)), RngSeed(3), 50).unwrap();
        assert!(fixed.deterministic && !fixed.seed_sensitive);
        assert_eq!(fixed.anomalies.len(), 1);
    }
}
