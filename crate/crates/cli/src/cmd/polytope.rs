use std::path::PathBuf;

use anyhow::Result;
use bellkit::polytope::{
    chsh_facets, classify, local_mixture_weights, local_vertices, pr_box, quantum_behavior,
    validate,
};
use bellkit::Behavior;
use clap::{Subcommand, ValueEnum};
use serde_json::json;

use super::simulate::parse_angles;
use super::{create, open};
use crate::report::{Outcome, RunReport, Table};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    which: Which,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Quantum,
    PrBox,
    Vertex,
    Uniform,
}

#[derive(Debug, Subcommand)]
enum Which {
    /// Validate a behavior and place it relative to the local polytope.
    Classify { file: PathBuf },
    /// The eight CHSH facet values of a behavior.
    Facets { file: PathBuf },
    /// Write a reference behavior as `x,y,a,b,p` CSV.
    Emit {
        #[arg(long, value_enum)]
        kind: Kind,
        /// For `quantum`: `canonical` or four radians.
        #[arg(long, default_value = "canonical")]
        angles: String,
        /// For `vertex`: deterministic strategy index 0..16.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<Behavior> {
    Ok(Behavior::read_csv(std::io::BufReader::new(open(path)?))?)
}

fn name(path: &std::path::Path) -> Option<String> {
    path.file_name().map(|f| f.to_string_lossy().into_owned())
}

pub fn run(a: Args) -> Result<Outcome> {
    match a.which {
        Which::Classify { file } => {
            let b = read(&file)?;
            let flags = validate(&b);
            let class = classify(&b);
            let facets = chsh_facets(&b).ok();
            let weights = if flags.all() {
                local_mixture_weights(&b)
            } else {
                None
            };
            let mut t = Table::default();
            t.row("classification", class)
                .row("positivity", flags.positivity)
                .row("normalization", flags.normalization)
                .row("no-signalling", flags.no_signalling);
            if let Some(f) = &facets {
                t.row("max |facet|", format!("{:.6}", f.max_abs))
                    .row("violated facets", format!("{:?}", f.violated_facets));
            }
            if let Some(w) = &weights {
                let support: Vec<String> = w
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 1e-12)
                    .map(|(i, p)| format!("{i}:{p:.4}"))
                    .collect();
                t.row("vertex weights", support.join(" "));
            }
            let out = json!({ "classification": class, "flags": flags, "facets": facets, "vertex_weights": weights });
            Ok(Outcome::ok(
                RunReport::new(
                    "polytope classify",
                    json!({ "file": name(&file) }),
                    None,
                    out,
                ),
                t.render(),
            ))
        }
        Which::Facets { file } => {
            let b = read(&file)?;
            let f = chsh_facets(&b)?;
            let mut t = Table::default();
            for (i, v) in f.values.iter().enumerate() {
                t.row(format!("facet {i}"), format!("{v:.6}"));
            }
            t.row("max |value|", format!("{:.6}", f.max_abs))
                .row("violated", format!("{:?}", f.violated_facets));
            Ok(Outcome::ok(
                RunReport::new(
                    "polytope facets",
                    json!({ "file": name(&file) }),
                    None,
                    json!(f),
                ),
                t.render(),
            ))
        }
        Which::Emit {
            kind,
            angles,
            index,
            out,
        } => {
            let b = match kind {
                Kind::Quantum => quantum_behavior(&parse_angles(&angles)?),
                Kind::PrBox => pr_box(),
                Kind::Vertex => {
                    let v = local_vertices();
                    let Some(b) = v.get(index) else {
                        anyhow::bail!("--index must be in 0..16, got {index}");
                    };
                    *b
                }
                Kind::Uniform => {
                    let v = local_vertices();
                    Behavior::mixture(&v.iter().map(|b| (1.0 / 16.0, *b)).collect::<Vec<_>>())
                }
            };
            let mut bytes = Vec::new();
            b.write_csv(&mut bytes)?;
            if let Some(p) = &out {
                use std::io::Write;
                create(p)?.write_all(&bytes)?;
            }
            let text = String::from_utf8(bytes).expect("csv is utf-8");
            let config = json!({ "kind": format!("{kind:?}").to_lowercase(), "angles": angles, "index": index });
            Ok(Outcome::ok(
                RunReport::new("polytope emit", config, None, json!({ "csv": text })),
                text,
            ))
        }
    }
}
