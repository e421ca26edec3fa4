//! Estimators for the probability that the observed CHSH combination of a
//! fixed table strictly exceeds 2 under fair random settings.
//!
//! The conjectured answer is "at most one half" for every table; nothing here
//! proves it. Setting assignments that leave a cell empty have no defined S
//! and are counted in the denominator but never as successes.
//!
//! The `s > 2` test is evaluated in exact integer arithmetic so that tables
//! sitting on the boundary (S = 2 exactly) are never miscounted by rounding.

use serde::{Deserialize, Serialize};

use crate::chsh::CHSH_SIGNS;
use crate::error::{Error, Result};
use crate::rng::{BellRng, RngSeed};
use crate::table::CounterfactualTable;

/// Largest number of assignments exhaustive mode will visit by default.
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConjectureMode {
    MonteCarlo { trials: u64 },
    Exhaustive { cap: u64 },
}

impl ConjectureMode {
    pub fn exhaustive() -> Self {
        ConjectureMode::Exhaustive {
            cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjectureEstimate {
    /// successes / assignments
    pub proportion: f64,
    pub successes: u64,
    pub assignments: u64,
    /// Assignments with an empty cell.
    pub undefined: u64,
}

/// Per-row products in cell order.
fn row_products(table: &CounterfactualTable) -> Vec<[i8; 4]> {
    table
        .rows()
        .iter()
        .map(|r| {
            let [a, ap, b, bp] = r.values();
            [a * b, a * bp, ap * b, ap * bp]
        })
        .collect()
}

/// Exact test of `Σ sign·sum/count > 2`; `None` when a cell is empty.
fn exceeds_two(sums: &[i64; 4], counts: &[u64; 4]) -> Option<bool> {
    if counts.iter().any(|&c| c == 0) {
        return None;
    }
    let l: i128 = counts.iter().map(|&c| c as i128).product();
    let lhs: i128 = (0..4)
        .map(|c| CHSH_SIGNS[c] as i128 * sums[c] as i128 * (l / counts[c] as i128))
        .sum();
    Some(lhs > 2 * l)
}

pub fn conjecture1_estimate(
    table: &CounterfactualTable,
    mode: ConjectureMode,
    seed: RngSeed,
) -> Result<ConjectureEstimate> {
    match mode {
        ConjectureMode::Exhaustive { cap } => exhaustive(table, cap),
        ConjectureMode::MonteCarlo { trials } => monte_carlo(table, trials, seed),
    }
}

fn exhaustive(table: &CounterfactualTable, cap: u64) -> Result<ConjectureEstimate> {
    let n = table.n();
    let assignments: u128 = if n >= 64 { u128::MAX } else { 1u128 << (2 * n) };
    if assignments > cap as u128 {
        return Err(Error::EnumerationCap { assignments, cap });
    }
    let prods = row_products(table);
    let mut acc = Tally::default();
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    descend(&prods, 0, &mut sums, &mut counts, &mut acc);
    Ok(acc.finish(assignments as u64))
}

#[derive(Default)]
struct Tally {
    successes: u64,
    undefined: u64,
}

impl Tally {
    fn record(&mut self, sums: &[i64; 4], counts: &[u64; 4]) {
        match exceeds_two(sums, counts) {
            Some(true) => self.successes += 1,
            Some(false) => {}
            None => self.undefined += 1,
        }
    }

    fn finish(self, assignments: u64) -> ConjectureEstimate {
        ConjectureEstimate {
            proportion: self.successes as f64 / assignments as f64,
            successes: self.successes,
            assignments,
            undefined: self.undefined,
        }
    }
}

fn descend(
    prods: &[[i8; 4]],
    row: usize,
    sums: &mut [i64; 4],
    counts: &mut [u64; 4],
    acc: &mut Tally,
) {
    if row == prods.len() {
        acc.record(sums, counts);
        return;
    }
    for cell in 0..4 {
        sums[cell] += prods[row][cell] as i64;
        counts[cell] += 1;
        descend(prods, row + 1, sums, counts, acc);
        sums[cell] -= prods[row][cell] as i64;
        counts[cell] -= 1;
    }
}

fn monte_carlo(
    table: &CounterfactualTable,
    trials: u64,
    seed: RngSeed,
) -> Result<ConjectureEstimate> {
    if trials == 0 {
        return Err(Error::ZeroLength { what: "trials" });
    }
    let prods = row_products(table);
    let mut rng = BellRng::new(seed);
    let mut acc = Tally::default();
    for _ in 0..trials {
        let mut sums = [0i64; 4];
        let mut counts = [0u64; 4];
        for p in &prods {
            let (x, y) = rng.next_setting_pair();
            let cell = (x as usize) * 2 + y as usize;
            sums[cell] += p[cell] as i64;
            counts[cell] += 1;
        }
        acc.record(&sums, &counts);
    }
    Ok(acc.finish(trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chsh::{observe, observed_correlations};
    use crate::table::{CounterfactualRow, SettingPair, SettingsStream};

    fn table(rows: &[[i8; 4]]) -> CounterfactualTable {
        CounterfactualTable::new(
            rows.iter()
                .map(|r| CounterfactualRow::from_values(*r))
                .collect(),
        )
        .unwrap()
    }

    /// Independent oracle: materialise every settings stream and go through
    /// `observe` + `observed_correlations`.
    fn brute_force(t: &CounterfactualTable) -> (u64, u64) {
        let n = t.n();
        let total = 1u64 << (2 * n);
        let mut wins = 0;
        for code in 0..total {
            let pairs = (0..n)
                .map(|j| SettingPair::from_cell(((code >> (2 * j)) & 3) as usize))
                .collect();
            let runs = observe(t, &SettingsStream::new(pairs)).unwrap();
            if let Ok(sum) = observed_correlations(&runs) {
                if sum.s > 2.0 + 1e-12 {
                    wins += 1;
                }
            }
        }
        (wins, total)
    }

    #[test]
    fn constant_rows_never_exceed_two() {
        let t = table(&[[1, 1, 1, -1]; 6]);
        let e = conjecture1_estimate(&t, ConjectureMode::exhaustive(), RngSeed(0)).unwrap();
        assert_eq!(e.proportion, 0.0);
        assert_eq!(e.assignments, 4096);
    }

    #[test]
    fn four_row_example_matches_brute_force() {
        let t = table(&[[1, 1, 1, 1], [1, 1, 1, 1], [-1, -1, 1, 1], [1, -1, -1, 1]]);
        let e = conjecture1_estimate(&t, ConjectureMode::exhaustive(), RngSeed(0)).unwrap();
        let (wins, total) = brute_force(&t);
        assert_eq!((e.successes, e.assignments), (wins, total));
        assert!(e.proportion <= 0.5);
    }

    #[test]
    fn exhaustive_agrees_with_brute_force_on_mixed_tables() {
        let t = table(&[
            [1, -1, 1, 1],
            [-1, 1, 1, -1],
            [1, 1, -1, 1],
            [1, 1, 1, -1],
            [-1, 1, -1, -1],
        ]);
        let e = conjecture1_estimate(&t, ConjectureMode::exhaustive(), RngSeed(0)).unwrap();
        assert_eq!((e.successes, e.assignments), brute_force(&t));
    }

    #[test]
    fn cap_is_enforced() {
        let t = table(&[[1, 1, 1, 1]; 13]);
        let err = conjecture1_estimate(&t, ConjectureMode::exhaustive(), RngSeed(0)).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { .. }));
        let small_cap = ConjectureMode::Exhaustive { cap: 255 };
        assert!(conjecture1_estimate(&table(&[[1, 1, 1, 1]; 4]), small_cap, RngSeed(0)).is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_exhaustive() {
        let t = table(&[
            [1, 1, 1, 1],
            [1, -1, 1, 1],
            [-1, 1, 1, 1],
            [1, 1, -1, 1],
            [1, 1, 1, -1],
            [1, 1, 1, 1],
        ]);
        let ex = conjecture1_estimate(&t, ConjectureMode::exhaustive(), RngSeed(0)).unwrap();
        let mc = conjecture1_estimate(
            &t,
            ConjectureMode::MonteCarlo { trials: 100_000 },
            RngSeed(11),
        )
        .unwrap();
        assert!(
            (ex.proportion - mc.proportion).abs() < 0.01,
            "{ex:?} {mc:?}"
        );
    }

    #[test]
    fn exact_boundary_is_not_a_success() {
        // rows with products (1, -1, 1, -1) give S = 2 exactly
        assert_eq!(exceeds_two(&[3, -3, 3, -3], &[3, 3, 3, 3]), Some(false));
        assert_eq!(exceeds_two(&[1, 1, 1, -1], &[1, 1, 1, 1]), Some(true));
        assert_eq!(exceeds_two(&[1, 1, 1, 0], &[1, 1, 1, 0]), None);
    }
}
