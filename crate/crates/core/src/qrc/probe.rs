//! Counterfactual-consistency probe: replay one round from the same state
//! under all four setting pairs and check that each wing's outcome ignores
//! the other wing's setting.

use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::lhv::LhvModel;
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};
use crate::table::Sign;

use super::challenger::{run_with_timeout, SpreadsheetChallenger, TableRequest};
use super::spreadsheet::parse_challenger_table;
use super::QrcError;

/// Rounds checked by default.
pub const DEFAULT_PROBE_ROUNDS: usize = 16;

pub trait ReplayOracle {
    fn identity(&self) -> String;

    /// Outcomes `(a, b)` of `round` from the state fixed by `seed`, under
    /// settings `(x, y)`. [`QrcError::Unsupported`] if replay is refused.
    fn replay(&self, seed: RngSeed, round: usize, x: u8, y: u8) -> Result<(Sign, Sign), QrcError>;

    /// True when outcomes are fixed before settings exist, as in a
    /// spreadsheet; the probe then holds by construction.
    fn settings_independent(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeOutcome {
    Consistent,
    Inconsistent,
    Unsupported,
    VacuouslyConsistent,
}

impl ProbeOutcome {
    /// `None` when the probe could not run.
    pub fn passed(self) -> Option<bool> {
        match self {
            ProbeOutcome::Consistent | ProbeOutcome::VacuouslyConsistent => Some(true),
            ProbeOutcome::Inconsistent => Some(false),
            ProbeOutcome::Unsupported => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub challenger: String,
    pub seed: u64,
    pub outcome: ProbeOutcome,
    pub rounds_probed: usize,
    /// Human-readable descriptions of each disagreement.
    pub inconsistencies: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Probes rounds `0..rounds`.
pub fn consistency_probe(
    oracle: &dyn ReplayOracle,
    seed: RngSeed,
    rounds: usize,
) -> Result<ProbeReport, QrcError> {
    let mut report = ProbeReport {
        challenger: oracle.identity(),
        seed: seed.0,
        outcome: ProbeOutcome::Consistent,
        rounds_probed: 0,
        inconsistencies: Vec::new(),
        note: None,
    };
    for round in 0..rounds {
        let mut out = [[(Sign::Plus, Sign::Plus); 2]; 2];
        for x in 0..2u8 {
            for y in 0..2u8 {
                match oracle.replay(seed, round, x, y) {
                    Ok(ab) => out[x as usize][y as usize] = ab,
                    Err(QrcError::Unsupported(why)) => {
                        report.outcome = ProbeOutcome::Unsupported;
                        report.note = Some(why);
                        return Ok(report);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        report.rounds_probed += 1;
        for x in 0..2 {
            if out[x][0].0 != out[x][1].0 {
                report.inconsistencies.push(format!(
                    "round {round}: A at x={x} changes with Bob's setting"
                ));
            }
        }
        for y in 0..2 {
            if out[0][y].1 != out[1][y].1 {
                report.inconsistencies.push(format!(
                    "round {round}: B at y={y} changes with Alice's setting"
                ));
            }
        }
    }
    report.outcome = if !report.inconsistencies.is_empty() {
        ProbeOutcome::Inconsistent
    } else if oracle.settings_independent() {
        report.note = Some("outcomes are fixed in a table before settings are drawn".into());
        ProbeOutcome::VacuouslyConsistent
    } else {
        ProbeOutcome::Consistent
    };
    Ok(report)
}

/// Runs `<program> [args] --seed S --round R --x X --y Y`, expecting one line
/// `a,b`. A nonzero exit is read as refusal.
#[derive(Debug, Clone)]
pub struct ProcessReplay {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ReplayOracle for ProcessReplay {
    fn identity(&self) -> String {
        std::iter::once(self.program.display().to_string())
            .chain(self.args.iter().cloned())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn replay(&self, seed: RngSeed, round: usize, x: u8, y: u8) -> Result<(Sign, Sign), QrcError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args);
        for (k, v) in [
            ("--seed", seed.0.to_string()),
            ("--round", round.to_string()),
            ("--x", x.to_string()),
            ("--y", y.to_string()),
        ] {
            cmd.arg(k).arg(v);
        }
        let out = match run_with_timeout(cmd, self.timeout, &self.identity()) {
            Err(QrcError::ChallengerFailure(msg)) => return Err(QrcError::Unsupported(msg)),
            other => other?,
        };
        let text = String::from_utf8_lossy(&out);
        parse_pair(text.trim()).ok_or_else(|| {
            QrcError::violation(
                Some(round),
                format!("replay output {:?} is not `a,b`", text.trim()),
            )
        })
    }
}

fn parse_pair(s: &str) -> Option<(Sign, Sign)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Replay for a round of an [`LhvModel`]: the hidden strategy of round `r`
/// is drawn from `seed.derive(r)`.
#[derive(Debug, Clone)]
pub struct LhvReplay {
    pub model: LhvModel,
}

pub fn lhv_replay_outcomes(
    model: &LhvModel,
    seed: RngSeed,
    round: usize,
    x: u8,
    y: u8,
) -> (Sign, Sign) {
    let mut rng = BellRng::with_stream(seed.derive(round as u64), MODEL_STREAM);
    let s = model.sample(&mut rng);
    (s.alice(x), s.bob(y))
}

impl ReplayOracle for LhvReplay {
    fn identity(&self) -> String {
        "native-lhv-replay".into()
    }

    fn replay(&self, seed: RngSeed, round: usize, x: u8, y: u8) -> Result<(Sign, Sign), QrcError> {
        Ok(lhv_replay_outcomes(&self.model, seed, round, x, y))
    }
}

/// A cheat whose `A` flips when Bob's setting is 1.
#[derive(Debug, Clone)]
pub struct SignallingReplay {
    pub model: LhvModel,
}

impl ReplayOracle for SignallingReplay {
    fn identity(&self) -> String {
        "signalling-cheat".into()
    }

    fn replay(&self, seed: RngSeed, round: usize, x: u8, y: u8) -> Result<(Sign, Sign), QrcError> {
        let (a, b) = lhv_replay_outcomes(&self.model, seed, round, x, y);
        Ok((if y == 1 { -a } else { a }, b))
    }
}

/// Reads a single spreadsheet table and answers replays from its rows.
pub struct SpreadsheetReplay<'a> {
    pub challenger: &'a dyn SpreadsheetChallenger,
    pub n: usize,
}

impl ReplayOracle for SpreadsheetReplay<'_> {
    fn identity(&self) -> String {
        self.challenger.identity()
    }

    fn replay(&self, seed: RngSeed, round: usize, x: u8, y: u8) -> Result<(Sign, Sign), QrcError> {
        if round >= self.n {
            return Err(QrcError::Unsupported(format!(
                "round {round} beyond table length {}",
                self.n
            )));
        }
        let bytes = self.challenger.produce_table(&TableRequest {
            seed,
            n: self.n,
            leaked_settings: None,
        })?;
        let row = parse_challenger_table(&bytes, self.n)?.rows()[round];
        Ok((row.alice(x), row.bob(y)))
    }

    fn settings_independent(&self) -> bool {
        true
    }
}
