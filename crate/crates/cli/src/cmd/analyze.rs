use std::path::PathBuf;

use anyhow::{Context, Result};
use bellkit::events::{
    analyze, pair_by_lattice, pair_by_window, parse_event_stream, UnsortedPolicy,
};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use super::open;
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Window,
    Lattice,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// NDJSON event stream: one `{"t_ns","wing","setting","outcome"}` per line.
    file: PathBuf,
    #[arg(long)]
    window_ns: u64,
    #[arg(long, value_enum, default_value_t = Method::Window)]
    method: Method,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    lattice_origin_ns: i64,
    /// Sort an out-of-order stream instead of rejecting it.
    #[arg(long)]
    sort: bool,
}

pub fn run(a: Args) -> Result<Outcome> {
    let policy = if a.sort {
        UnsortedPolicy::Sort
    } else {
        UnsortedPolicy::Reject
    };
    let stream = parse_event_stream(std::io::BufReader::new(open(&a.file)?), policy)
        .with_context(|| format!("parsing {}", a.file.display()))?;
    let pairing = match a.method {
        Method::Window => pair_by_window(&stream, a.window_ns)?,
        Method::Lattice => pair_by_lattice(&stream, a.window_ns, a.lattice_origin_ns)?,
    };
    let report = analyze(&pairing)?;
    let mut t = Table::default();
    t.row("events", stream.len())
        .row("pairs", pairing.pairs.len())
        .row("singles A", format!("{:?}", pairing.singles_a))
        .row("singles B", format!("{:?}", pairing.singles_b))
        .row("S", format!("{:.4}", report.summary.s))
        .row("se", format!("{:.4}", report.summary.se))
        .row("gamma", format!("{:.4}", report.efficiency.gamma_hat))
        .row("naive (S > 2)", report.naive.label())
        .row(
            format!(
                "detection-adjusted (S > {:.4})",
                report.detection_adjusted.limit
            ),
            report.detection_adjusted.label(),
        )
        .row(
            format!(
                "coincidence-adjusted (S > {:.4})",
                report.coincidence_adjusted.limit
            ),
            report.coincidence_adjusted.label(),
        );
    let config = json!({
        "file": a.file.file_name().map(|f| f.to_string_lossy().into_owned()),
        "method": a.method,
        "window_ns": a.window_ns,
        "lattice_origin_ns": a.lattice_origin_ns,
        "sort": a.sort,
    });
    let outputs = json!({
        "events": stream.len(),
        "pairs": pairing.pairs.len(),
        "singles_a": pairing.singles_a,
        "singles_b": pairing.singles_b,
        "report": report,
    });
    Ok(Outcome::ok(
        RunReport::new("analyze", config, None, outputs),
        t.render(),
    ))
}
