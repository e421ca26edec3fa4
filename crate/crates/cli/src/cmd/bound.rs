use std::path::PathBuf;

use anyhow::{bail, Result};
use bellkit::bounds::{
    canonical_delta, critical_efficiency, larsson_bound, min_runs_for, theorem1_bound,
    tsirelson_limit, two_term_bound, two_term_bound_optimized,
};
use bellkit::{BoundReport, Loophole};
use clap::{Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use super::{create, fmt_prob};
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    which: Which,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LoopholeArg {
    Detection,
    Coincidence,
}

impl From<LoopholeArg> for Loophole {
    fn from(l: LoopholeArg) -> Self {
        match l {
            LoopholeArg::Detection => Loophole::Detection,
            LoopholeArg::Coincidence => Loophole::Coincidence,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Which {
    /// Single-exponential tail `min(1, 8 exp(-N (eta/16)^2))`.
    Theorem1 {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eta: f64,
    },
    /// Two-term tail at a given split (default: the canonical split).
    TwoTerm {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Two-term tail minimised over the split.
    Optimized {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eta: f64,
    },
    /// Smallest N whose single-exponential tail is at most alpha.
    MinRuns {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        alpha: f64,
    },
    /// Local limit on S at efficiency gamma.
    Larsson {
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_enum)]
        loophole: LoopholeArg,
    },
    /// Both efficiency-adjusted limits over a gamma grid, as CSV.
    LarssonCurve {
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 1.0)]
        to: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Also write the CSV to a file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// The quantum maximum 2√2.
    Tsirelson,
}

fn bound_table(r: &BoundReport) -> String {
    let mut t = Table::default();
    t.row("method", format!("{:?}", r.method))
        .row("n", r.n)
        .row("eta", r.eta)
        .row("probability", fmt_prob(r.probability));
    if let Some(d) = r.delta {
        t.row("delta", format!("{d:.6e}"));
    }
    t.render()
}

#[derive(Serialize)]
struct CurveRow {
    gamma: f64,
    detection: f64,
    coincidence: f64,
}

fn curve(from: f64, to: f64, step: f64) -> Result<Vec<CurveRow>> {
    if !(step > 0.0) || !(from > 0.0) || !(to <= 1.0) || from > to {
        bail!("need 0 < from <= to <= 1 and step > 0");
    }
    let steps = ((to - from) / step + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| {
            let gamma = from + i as f64 * step;
            Ok(CurveRow {
                gamma,
                detection: larsson_bound(gamma, Loophole::Detection)?.limit,
                coincidence: larsson_bound(gamma, Loophole::Coincidence)?.limit,
            })
        })
        .collect()
}

pub fn run(a: Args) -> Result<Outcome> {
    let (name, config, outputs, human) = match a.which {
        Which::Theorem1 { n, eta } => {
            let r = theorem1_bound(n, eta)?;
            (
                "theorem1",
                json!({ "n": n, "eta": eta }),
                json!(r),
                bound_table(&r),
            )
        }
        Which::TwoTerm { n, eta, delta } => {
            let delta = delta.unwrap_or_else(|| canonical_delta(eta));
            let r = two_term_bound(n, eta, delta)?;
            (
                "two-term",
                json!({ "n": n, "eta": eta, "delta": delta }),
                json!(r),
                bound_table(&r),
            )
        }
        Which::Optimized { n, eta } => {
            let r = two_term_bound_optimized(n, eta)?;
            (
                "optimized",
                json!({ "n": n, "eta": eta }),
                json!(r),
                bound_table(&r),
            )
        }
        Which::MinRuns { eta, alpha } => {
            let n = min_runs_for(eta, alpha)?;
            let mut t = Table::default();
            t.row("eta", eta).row("alpha", alpha).row("min runs", n);
            (
                "min-runs",
                json!({ "eta": eta, "alpha": alpha }),
                json!({ "n": n }),
                t.render(),
            )
        }
        Which::Larsson { gamma, loophole } => {
            let b = larsson_bound(gamma, loophole.into())?;
            let crit = critical_efficiency(loophole.into());
            let mut t = Table::default();
            t.row("loophole", format!("{:?}", b.loophole).to_lowercase())
                .row("gamma", gamma)
                .row("limit", format!("{:.6}", b.limit))
                .row("critical gamma", format!("{crit:.6}"));
            (
                "larsson",
                json!({ "gamma": gamma, "loophole": b.loophole }),
                json!({ "bound": b, "critical_efficiency": crit }),
                t.render(),
            )
        }
        Which::LarssonCurve {
            from,
            to,
            step,
            csv,
        } => {
            let rows = curve(from, to, step)?;
            let mut text = String::from("gamma,detection,coincidence\n");
            for r in &rows {
                text.push_str(&format!("{},{},{}\n", r.gamma, r.detection, r.coincidence));
            }
            if let Some(p) = csv {
                use std::io::Write;
                create(&p)?.write_all(text.as_bytes())?;
            }
            (
                "larsson-curve",
                json!({ "from": from, "to": to, "step": step }),
                json!({ "rows": rows }),
                text,
            )
        }
        Which::Tsirelson => {
            let v = tsirelson_limit();
            (
                "tsirelson",
                json!({}),
                json!({ "limit": v }),
                format!("{v}\n"),
            )
        }
    };
    Ok(Outcome::ok(
        RunReport::new(&format!("bound {name}"), config, None, outputs),
        human,
    ))
}
