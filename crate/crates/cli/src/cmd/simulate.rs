use std::path::PathBuf;

use anyhow::{bail, Result};
use bellkit::bounds::theorem1_bound;
use bellkit::chsh::write_runs_csv;
use bellkit::events::{analyze, EventStream, PairingResult};
use bellkit::lhv::{
    generate_table, simulate_loophole_experiment, LoopholeSource, WEIHS_WING_THINNING,
};
use bellkit::polytope::{pr_box, quantum_behavior};
use bellkit::quantum::{canonical_angles, simulate_experiment};
use bellkit::table::sample_settings;
use bellkit::{
    observe, observed_correlations, AngleSet, Behavior, CheaterConfig, ChshSummary, LhvModel,
};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use super::{create, fmt_prob, resolve_seed};
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Quantum,
    Lhv,
    Cheater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Canonical,
    PrBox,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    model: Model,
    /// `canonical` or four radians `a,a',b,b'` (quantum model).
    #[arg(long, default_value = "canonical")]
    angles: String,
    /// Uniform mixture of the 16 deterministic strategies (lhv model).
    #[arg(long, conflicts_with = "strategy")]
    uniform: bool,
    /// A single deterministic strategy by index 0..16 (lhv model).
    #[arg(long)]
    strategy: Option<usize>,
    /// Behavior reproduced on coincidences (cheater model).
    #[arg(long, value_enum, default_value_t = Target::Canonical)]
    target: Target,
    /// Per-wing probability of keeping an intended detection (cheater model).
    #[arg(long, default_value_t = 1.0)]
    thinning: f64,
    /// Shorthand for the Weihs-scale thinning.
    #[arg(long, conflicts_with = "thinning")]
    weihs: bool,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, env = "BELLKIT_SEED")]
    seed: Option<u64>,
    /// Write observed runs (`x,y,a,b`; 0 = no detection for the cheater).
    #[arg(long)]
    runs_csv: Option<PathBuf>,
    /// Write the counterfactual table (lhv model).
    #[arg(long)]
    table_csv: Option<PathBuf>,
    /// Write the cheater's detections as a timed NDJSON event stream.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Run period used for `--events`.
    #[arg(long, default_value_t = 1000)]
    period_ns: u64,
}

pub fn parse_angles(s: &str) -> Result<AngleSet> {
    if s == "canonical" {
        return Ok(canonical_angles());
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("bad --angles {s:?}: {e}"))?;
    if v.len() != 4 || v.iter().any(|a| !a.is_finite()) {
        bail!("--angles needs `canonical` or four finite radians, got {s:?}");
    }
    Ok(AngleSet::new(v[0], v[1], v[2], v[3]))
}

pub fn target_behavior(t: Target) -> Behavior {
    match t {
        Target::Canonical => quantum_behavior(&canonical_angles()),
        Target::PrBox => pr_box(),
    }
}

#[derive(Serialize)]
struct Tail {
    excess: f64,
    theorem1: Option<f64>,
}

fn tail(summary: &ChshSummary) -> Result<Tail> {
    let excess = summary.s - 2.0;
    let theorem1 = if excess > 0.0 {
        Some(theorem1_bound(summary.n_total, excess)?.probability)
    } else {
        None
    };
    Ok(Tail { excess, theorem1 })
}

fn summary_rows(t: &mut Table, s: &ChshSummary) {
    t.row("runs", s.n_total)
        .row("cell counts", format!("{:?}", s.counts))
        .row(
            "correlations",
            format!(
                "E00={:.4} E01={:.4} E10={:.4} E11={:.4}",
                s.corr[0], s.corr[1], s.corr[2], s.corr[3]
            ),
        )
        .row("S", format!("{:.4}", s.s))
        .row("se", format!("{:.4}", s.se));
}

fn tail_row(t: &mut Table, tail: &Tail) {
    match tail.theorem1 {
        Some(p) => t.row(
            "local tail",
            format!(
                "P(S - 2 >= {:.4}) <= {} for any local table",
                tail.excess,
                fmt_prob(p)
            ),
        ),
        None => t.row("local tail", "no excess over 2"),
    };
}

pub fn run(a: Args) -> Result<Outcome> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let seed = resolve_seed(a.seed);
    let mut t = Table::default();
    t.row("model", format!("{:?}", a.model).to_lowercase())
        .row("seed", seed);
    let (config, outputs) = match a.model {
        Model::Quantum => {
            let angles = parse_angles(&a.angles)?;
            let runs = simulate_experiment(&angles, a.n, seed)?;
            if let Some(p) = &a.runs_csv {
                write_runs_csv(&runs, create(p)?)?;
            }
            let summary = observed_correlations(&runs)?;
            let tail = tail(&summary)?;
            summary_rows(&mut t, &summary);
            t.row("ideal S", format!("{:.4}", angles.chsh()));
            tail_row(&mut t, &tail);
            (
                json!({ "model": a.model, "angles": angles, "n": a.n }),
                json!({ "summary": summary, "ideal_s": angles.chsh(), "tail": tail }),
            )
        }
        Model::Lhv => {
            let (model, label) = match (a.uniform, a.strategy) {
                (true, _) => (LhvModel::uniform(), "uniform".to_string()),
                (false, Some(i)) => {
                    let Some(s) = bellkit::lhv::enumerate_deterministic().get(i).copied() else {
                        bail!("--strategy must be in 0..16, got {i}");
                    };
                    (LhvModel::deterministic(s), format!("deterministic:{i}"))
                }
                (false, None) => (
                    LhvModel::boundary_saturating(),
                    "boundary-saturating".to_string(),
                ),
            };
            let table = generate_table(&model, a.n, seed)?;
            let settings = sample_settings(a.n, seed)?;
            let runs = observe(&table, &settings)?;
            if let Some(p) = &a.table_csv {
                table.write_csv(create(p)?)?;
            }
            if let Some(p) = &a.runs_csv {
                write_runs_csv(&runs, create(p)?)?;
            }
            let full = bellkit::chsh::full_table_chsh(&table)?;
            let summary = observed_correlations(&runs)?;
            let tail = tail(&summary)?;
            t.row("lhv", &label);
            summary_rows(&mut t, &summary);
            t.row("full-table S", format!("{full:.4}"));
            tail_row(&mut t, &tail);
            (
                json!({ "model": a.model, "lhv": label, "n": a.n }),
                json!({ "summary": summary, "full_table_s": full, "tail": tail }),
            )
        }
        Model::Cheater => {
            let thinning = if a.weihs {
                WEIHS_WING_THINNING
            } else {
                a.thinning
            };
            let config = CheaterConfig::with_thinning(target_behavior(a.target), thinning)?;
            let data =
                simulate_loophole_experiment(&LoopholeSource::Cheater { config }, a.n, seed)?;
            if let Some(p) = &a.runs_csv {
                data.write_csv(create(p)?)?;
            }
            if let Some(p) = &a.events {
                EventStream::from_loophole_dataset(&data, a.period_ns).write_ndjson(create(p)?)?;
            }
            let rounds: Vec<_> = data
                .records
                .iter()
                .map(|r| (r.x, r.y, r.a.detected(), r.b.detected()))
                .collect();
            let report = analyze(&PairingResult::clocked(&rounds))?;
            let rate = data.counts.both as f64 / a.n as f64;
            t.row("target", format!("{:?}", a.target).to_lowercase())
                .row("thinning", thinning)
                .row(
                    "detections",
                    format!(
                        "both={} one={} none={}",
                        data.counts.both, data.counts.exactly_one, data.counts.none
                    ),
                )
                .row("coincidence rate", format!("{rate:.4}"));
            summary_rows(&mut t, &report.summary);
            t.row("gamma", format!("{:.4}", report.efficiency.gamma_hat))
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
            (
                json!({ "model": a.model, "target": a.target, "thinning": thinning, "n": a.n }),
                json!({ "counts": data.counts, "coincidence_rate": rate, "analysis": report }),
            )
        }
    };
    Ok(Outcome::ok(
        RunReport::new("simulate", config, Some(seed.0), outputs),
        t.render(),
    ))
}
