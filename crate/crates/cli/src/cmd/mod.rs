pub mod analyze;
pub mod bound;
pub mod challenger;
pub mod conjecture;
pub mod polytope;
pub mod qrc;
pub mod simulate;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use bellkit::RngSeed;

/// Explicit `--seed` / `BELLKIT_SEED`, or a fresh one announced on stderr.
pub fn resolve_seed(seed: Option<u64>) -> RngSeed {
    match seed {
        Some(s) => RngSeed(s),
        None => {
            use std::hash::{BuildHasher, Hasher};
            let s = std::collections::hash_map::RandomState::new()
                .build_hasher()
                .finish();
            eprintln!("seed: {s} (fresh; re-run with --seed {s})");
            RngSeed(s)
        }
    }
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

pub fn fmt_prob(p: f64) -> String {
    if p == 0.0 || (1e-3..=1.0).contains(&p) {
        format!("{p:.6}")
    } else {
        format!("{p:.3e}")
    }
}
