use std::path::PathBuf;

use anyhow::{bail, Result};
use bellkit::conjecture::{
    conjecture1_estimate, ConjectureEstimate, ConjectureMode, DEFAULT_EXHAUSTIVE_CAP,
};
use bellkit::lhv::{enumerate_deterministic, generate_table};
use bellkit::{CounterfactualTable, LhvModel, RngSeed};
use clap::Subcommand;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{open, resolve_seed};
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    which: Which,
    /// Worker threads for independent tables.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Which {
    /// Exact proportion for every ±1 table with `n` rows.
    Sweep {
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
    /// Monte Carlo over random tables, optionally checked against exact.
    Random {
        #[arg(long, default_value_t = 100)]
        tables: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Compare each estimate with the exhaustive value.
        #[arg(long)]
        compare: bool,
        #[arg(long, env = "BELLKIT_SEED")]
        seed: Option<u64>,
    },
    /// One table from an `A,Ap,B,Bp` CSV file.
    Table {
        file: PathBuf,
        /// Monte Carlo trials when the table is too long to enumerate.
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, env = "BELLKIT_SEED")]
        seed: Option<u64>,
    },
}

/// Row `i` of table `k` is deterministic strategy `(k >> 4i) & 15`.
pub fn table_from_index(k: u64, n: usize) -> CounterfactualTable {
    let strategies = enumerate_deterministic();
    let rows = (0..n)
        .map(|i| strategies[((k >> (4 * i)) & 15) as usize].row())
        .collect();
    CounterfactualTable::new(rows).expect("n >= 1")
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?)
}

#[derive(Serialize)]
struct SweepOut {
    tables: u64,
    max_proportion: f64,
    tables_at_max: u64,
    first_argmax: u64,
    tables_above_half: u64,
    mean_proportion: f64,
}

fn sweep(n: usize, jobs: usize) -> Result<(serde_json::Value, String)> {
    if !(1..=4).contains(&n) {
        bail!("sweep supports 1 <= n <= 4 (2^(4n) tables)");
    }
    let total = 1u64 << (4 * n);
    let props: Vec<f64> = pool(jobs)?.install(|| {
        (0..total)
            .into_par_iter()
            .map(|k| {
                conjecture1_estimate(
                    &table_from_index(k, n),
                    ConjectureMode::exhaustive(),
                    RngSeed(0),
                )
                .map(|e| e.proportion)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let max = props.iter().copied().fold(0.0, f64::max);
    let out = SweepOut {
        tables: total,
        max_proportion: max,
        tables_at_max: props.iter().filter(|&&p| p == max).count() as u64,
        first_argmax: props.iter().position(|&p| p == max).unwrap_or(0) as u64,
        tables_above_half: props.iter().filter(|&&p| p > 0.5).count() as u64,
        mean_proportion: props.iter().sum::<f64>() / total as f64,
    };
    let mut t = Table::default();
    t.row("rows per table", n)
        .row("tables", out.tables)
        .row("max Pr(S > 2)", format!("{:.6}", out.max_proportion))
        .row("tables at max", out.tables_at_max)
        .row("first argmax", out.first_argmax)
        .row("mean Pr(S > 2)", format!("{:.6}", out.mean_proportion));
    let verdict = if out.tables_above_half == 0 {
        "no table exceeds 1/2".to_string()
    } else {
        format!(
            "COUNTEREXAMPLE: {} tables exceed 1/2",
            out.tables_above_half
        )
    };
    t.row("conjecture", verdict);
    Ok((json!(out), t.render()))
}

#[derive(Serialize)]
struct RandomRow {
    table: usize,
    monte_carlo: ConjectureEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<ConjectureEstimate>,
}

pub fn run(a: Args) -> Result<Outcome> {
    match a.which {
        Which::Sweep { n } => {
            let (out, human) = sweep(n, a.jobs)?;
            Ok(Outcome::ok(
                RunReport::new("conjecture sweep", json!({ "n": n }), None, out),
                human,
            ))
        }
        Which::Random {
            tables,
            n,
            trials,
            compare,
            seed,
        } => {
            if n == 0 || tables == 0 {
                bail!("--n and --tables must be positive");
            }
            let seed = resolve_seed(seed);
            let model = LhvModel::uniform();
            let rows: Vec<RandomRow> = pool(a.jobs)?.install(|| {
                (0..tables)
                    .into_par_iter()
                    .map(|i| -> Result<RandomRow> {
                        let s = seed.derive(i as u64);
                        let table = generate_table(&model, n, s)?;
                        let mc = conjecture1_estimate(
                            &table,
                            ConjectureMode::MonteCarlo { trials },
                            s.derive(0),
                        )?;
                        let exact = if compare {
                            Some(conjecture1_estimate(
                                &table,
                                ConjectureMode::exhaustive(),
                                s,
                            )?)
                        } else {
                            None
                        };
                        Ok(RandomRow {
                            table: i,
                            monte_carlo: mc,
                            exact,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let max_mc = rows
                .iter()
                .map(|r| r.monte_carlo.proportion)
                .fold(0.0, f64::max);
            let max_diff = rows
                .iter()
                .filter_map(|r| {
                    r.exact
                        .map(|e| (e.proportion - r.monte_carlo.proportion).abs())
                })
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
            let max_exact = rows
                .iter()
                .filter_map(|r| r.exact.map(|e| e.proportion))
                .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
            let mut t = Table::default();
            t.row("tables", tables)
                .row("rows per table", n)
                .row("trials", trials)
                .row("seed", seed)
                .row("max Monte Carlo Pr(S > 2)", format!("{max_mc:.6}"));
            if let (Some(d), Some(e)) = (max_diff, max_exact) {
                t.row("max exact Pr(S > 2)", format!("{e:.6}"))
                    .row("max |MC - exact|", format!("{d:.6}"));
            }
            let out = json!({
                "max_monte_carlo": max_mc,
                "max_exact": max_exact,
                "max_abs_difference": max_diff,
                "tables": rows,
            });
            let config = json!({ "tables": tables, "n": n, "trials": trials, "compare": compare });
            Ok(Outcome::ok(
                RunReport::new("conjecture random", config, Some(seed.0), out),
                t.render(),
            ))
        }
        Which::Table { file, trials, seed } => {
            let table = CounterfactualTable::read_csv(std::io::BufReader::new(open(&file)?))?;
            let exhaustive = (table.n() as u32) < 32
                && 4u128.pow(table.n() as u32) <= DEFAULT_EXHAUSTIVE_CAP as u128;
            let (mode, seed) = if exhaustive {
                (ConjectureMode::exhaustive(), None)
            } else {
                (
                    ConjectureMode::MonteCarlo { trials },
                    Some(resolve_seed(seed)),
                )
            };
            let e = conjecture1_estimate(&table, mode, seed.unwrap_or(RngSeed(0)))?;
            let mut t = Table::default();
            t.row("rows", table.n())
                .row(
                    "mode",
                    if exhaustive {
                        "exhaustive"
                    } else {
                        "monte-carlo"
                    },
                )
                .row("Pr(S > 2)", format!("{:.6}", e.proportion))
                .row("assignments", e.assignments)
                .row("undefined (empty cell)", e.undefined);
            let config = json!({
                "file": file.file_name().map(|f| f.to_string_lossy().into_owned()),
                "mode": mode,
            });
            Ok(Outcome::ok(
                RunReport::new("conjecture table", config, seed.map(|s| s.0), json!(e)),
                t.render(),
            ))
        }
    }
}
