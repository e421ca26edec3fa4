use std::io::Write;

use serde::Serialize;
use serde_json::Value;

/// Machine-readable record of one command. Contains no timestamps or paths
/// that change between runs, so re-running with the echoed seed and config
/// reproduces it byte for byte.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Value,
    pub versions: Versions,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub bellkit: &'static str,
    pub rng: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            bellkit: env!("CARGO_PKG_VERSION"),
            rng: "chacha8",
        }
    }
}

impl RunReport {
    pub fn new(
        command: &str,
        config: impl Serialize,
        seed: Option<u64>,
        outputs: impl Serialize,
    ) -> Self {
        RunReport {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            outputs: serde_json::to_value(outputs).expect("outputs serialize"),
            versions: Versions::default(),
        }
    }
}

/// A finished command: its report, a human rendering and the exit code.
pub struct Outcome {
    pub report: RunReport,
    pub human: String,
    pub exit: i32,
}

impl Outcome {
    pub fn ok(report: RunReport, human: String) -> Self {
        Outcome {
            report,
            human,
            exit: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Human,
    Ndjson,
}

pub fn emit(out: &Outcome, format: Format) -> std::io::Result<()> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match format {
        Format::Ndjson => writeln!(
            w,
            "{}",
            serde_json::to_string(&out.report).expect("report serializes")
        ),
        Format::Human => {
            write!(w, "{}", out.human)?;
            if !out.human.ends_with('\n') {
                writeln!(w)?;
            }
            Ok(())
        }
    }
}

/// Aligned `key: value` lines.
#[derive(Default)]
pub struct Table {
    rows: Vec<(String, String)>,
}

impl Table {
    pub fn row(&mut self, k: impl Into<String>, v: impl ToString) -> &mut Self {
        self.rows.push((k.into(), v.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(k, _)| k.chars().count())
            .max()
            .unwrap_or(0);
        let mut s = String::new();
        for (k, v) in &self.rows {
            s.push_str(&format!("{k:<width$}  {v}\n"));
        }
        s
    }
}
