//! Spreadsheet-mode challengers: external programs and native stand-ins.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::lhv::{generate_table, LhvModel};
use crate::quantum::{canonical_angles, sample_run, AngleSet};
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};
use crate::table::{CounterfactualRow, CounterfactualTable, SettingsStream};

use super::QrcError;

/// What the referee hands a spreadsheet challenger.
#[derive(Debug, Clone, Copy)]
pub struct TableRequest<'a> {
    pub seed: RngSeed,
    pub n: usize,
    /// Only populated in harness test mode.
    pub leaked_settings: Option<&'a SettingsStream>,
}

pub trait SpreadsheetChallenger: Send + Sync {
    fn identity(&self) -> String;

    /// Raw CSV bytes of an `n×4` table.
    fn produce_table(&self, req: &TableRequest<'_>) -> Result<Vec<u8>, QrcError>;

    /// True if the challenger can only play with settings disclosed in advance.
    fn needs_settings(&self) -> bool {
        false
    }
}

/// Runs `<program> [args...] --seed <u64> --n <int>` and reads its stdout.
#[derive(Debug, Clone)]
pub struct ProcessChallenger {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ProcessChallenger {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>, timeout: Duration) -> Self {
        ProcessChallenger {
            program: program.into(),
            args,
            timeout,
        }
    }

    /// Splits a shell-free command line on whitespace.
    pub fn from_command_line(cmd: &str, timeout: Duration) -> Result<Self, QrcError> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| QrcError::Config("empty challenger command".into()))?;
        Ok(Self::new(program, parts.collect(), timeout))
    }
}

/// Runs a command to completion with a deadline, returning its stdout.
pub(crate) fn run_with_timeout(
    mut cmd: Command,
    timeout: Duration,
    label: &str,
) -> Result<Vec<u8>, QrcError> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd
        .spawn()
        .map_err(|e| QrcError::ChallengerFailure(format!("{label}: cannot start: {e}")))?;
    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });
    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(2)),
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(QrcError::Timeout {
                    what: label.to_string(),
                    after_ms: timeout.as_millis() as u64,
                });
            }
            Err(e) => return Err(QrcError::ChallengerFailure(format!("{label}: {e}"))),
        }
    };
    let out = out_reader
        .join()
        .expect("reader thread")
        .map_err(|e| QrcError::ChallengerFailure(format!("{label}: reading stdout: {e}")))?;
    let err = err_reader.join().expect("reader thread");
    if !status.success() {
        let msg = String::from_utf8_lossy(&err);
        let msg = msg.trim();
        return Err(QrcError::ChallengerFailure(format!(
            "{label} exited with {status}{}{msg}",
            if msg.is_empty() { "" } else { ": " }
        )));
    }
    Ok(out)
}

impl SpreadsheetChallenger for ProcessChallenger {
    fn identity(&self) -> String {
        let mut s = self.program.display().to_string();
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s
    }

    fn produce_table(&self, req: &TableRequest<'_>) -> Result<Vec<u8>, QrcError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .arg("--seed")
            .arg(req.seed.0.to_string())
            .arg("--n")
            .arg(req.n.to_string());
        run_with_timeout(cmd, self.timeout, &self.identity())
    }
}

/// Honest local challenger drawing each row from an [`LhvModel`].
#[derive(Debug, Clone)]
pub struct NativeLhvChallenger {
    pub model: LhvModel,
}

impl Default for NativeLhvChallenger {
    fn default() -> Self {
        NativeLhvChallenger {
            model: LhvModel::boundary_saturating(),
        }
    }
}

impl SpreadsheetChallenger for NativeLhvChallenger {
    fn identity(&self) -> String {
        "native-lhv".to_string()
    }

    fn produce_table(&self, req: &TableRequest<'_>) -> Result<Vec<u8>, QrcError> {
        Ok(generate_table(&self.model, req.n, req.seed)?.to_csv_bytes())
    }
}

/// Samples quantum outcomes for the disclosed settings and copies them into
/// the unobserved columns. Useful only to check that the harness can
/// recognise a violation; it is not a legitimate entry.
#[derive(Debug, Clone)]
pub struct QuantumPseudoChallenger {
    pub angles: AngleSet,
}

impl Default for QuantumPseudoChallenger {
    fn default() -> Self {
        QuantumPseudoChallenger {
            angles: canonical_angles(),
        }
    }
}

impl SpreadsheetChallenger for QuantumPseudoChallenger {
    fn identity(&self) -> String {
        "quantum-pseudo (non-compliant: reads settings)".to_string()
    }

    fn needs_settings(&self) -> bool {
        true
    }

    fn produce_table(&self, req: &TableRequest<'_>) -> Result<Vec<u8>, QrcError> {
        let settings = req.leaked_settings.ok_or_else(|| {
            QrcError::Unsupported("quantum pseudo-challenger needs harness test mode".into())
        })?;
        if settings.n() != req.n {
            return Err(QrcError::ChallengerFailure(
                "leaked settings have the wrong length".into(),
            ));
        }
        let mut rng = BellRng::with_stream(req.seed, MODEL_STREAM);
        let rows = settings
            .pairs()
            .iter()
            .map(|p| {
                let (a, b) = sample_run(&self.angles, p.x, p.y, &mut rng);
                CounterfactualRow::new(a, a, b, b)
            })
            .collect();
        Ok(CounterfactualTable::new(rows)?.to_csv_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_lhv_is_seeded() {
        let c = NativeLhvChallenger::default();
        let req = TableRequest {
            seed: RngSeed(5),
            n: 10,
            leaked_settings: None,
        };
        let t1 = c.produce_table(&req).unwrap();
        assert_eq!(t1, c.produce_table(&req).unwrap());
        let text = String::from_utf8(t1).unwrap();
        assert!(text.starts_with("A,Ap,B,Bp\n"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn pseudo_challenger_refuses_without_settings() {
        let c = QuantumPseudoChallenger::default();
        let req = TableRequest {
            seed: RngSeed(5),
            n: 10,
            leaked_settings: None,
        };
        assert!(matches!(
            c.produce_table(&req),
            Err(QrcError::Unsupported(_))
        ));
    }

    #[cfg(unix)]
    #[test]
    fn process_failures_map_to_exit_3() {
        let c = ProcessChallenger::from_command_line("false", Duration::from_secs(5)).unwrap();
        let req = TableRequest {
            seed: RngSeed(1),
            n: 1,
            leaked_settings: None,
        };
        let e = c.produce_table(&req).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");

        let c = ProcessChallenger::new(
            "sh",
            vec!["-c".into(), "sleep 5".into()],
            Duration::from_millis(100),
        );
        let e = c.produce_table(&req).unwrap_err();
        assert!(matches!(e, QrcError::Timeout { .. }), "{e}");

        let c = ProcessChallenger::new("/nonexistent/challenger", vec![], Duration::from_secs(1));
        assert_eq!(c.produce_table(&req).unwrap_err().exit_code(), 3);
    }
}
