//! The CHSH statistic on full tables and on randomly observed sub-samples.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CounterfactualRow, CounterfactualTable, SettingPair, SettingsStream, Sign};

/// Sign of each cell's correlation in S, in cell order (0,0),(0,1),(1,0),(1,1).
pub const CHSH_SIGNS: [i8; 4] = [1, 1, 1, -1];

/// `A·B + A·B′ + A′·B − A′·B′` for one row; always exactly `+2` or `-2`.
pub fn row_chsh_term(row: &CounterfactualRow) -> i8 {
    let [a, ap, b, bp] = row.values();
    a * b + a * bp + ap * b - ap * bp
}

/// Mean of [`row_chsh_term`] over the whole table, in `[-2, 2]`.
pub fn full_table_chsh(table: &CounterfactualTable) -> Result<f64> {
    let rows = table.rows();
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let total: i64 = rows.iter().map(|r| row_chsh_term(r) as i64).sum();
    Ok(total as f64 / rows.len() as f64)
}

/// Full-table average of the product for one setting pair.
pub fn full_table_correlation(table: &CounterfactualTable, pair: SettingPair) -> f64 {
    let sum: i64 = table
        .rows()
        .iter()
        .map(|r| (r.alice(pair.x) * r.bob(pair.y)).value() as i64)
        .sum();
    sum as f64 / table.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedRun {
    pub x: u8,
    pub y: u8,
    pub a_out: Sign,
    pub b_out: Sign,
    pub row_index: usize,
}

impl ObservedRun {
    pub fn cell(&self) -> usize {
        SettingPair {
            x: self.x,
            y: self.y,
        }
        .cell()
    }

    pub fn product(&self) -> i8 {
        (self.a_out * self.b_out).value()
    }
}

/// Keeps, for every row, only the columns its setting pair selects.
pub fn observe(table: &CounterfactualTable, settings: &SettingsStream) -> Result<Vec<ObservedRun>> {
    if table.n() != settings.n() {
        return Err(Error::LengthMismatch {
            table: table.n(),
            settings: settings.n(),
        });
    }
    Ok(table
        .rows()
        .iter()
        .zip(settings.pairs())
        .enumerate()
        .map(|(row_index, (row, p))| ObservedRun {
            x: p.x,
            y: p.y,
            a_out: row.alice(p.x),
            b_out: row.bob(p.y),
            row_index,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshSummary {
    /// ⟨AB⟩, ⟨AB′⟩, ⟨A′B⟩, ⟨A′B′⟩ on the observed runs.
    pub corr: [f64; 4],
    pub counts: [u64; 4],
    pub s: f64,
    /// Delta-method standard error `sqrt(Σ (1 − corr²) / count)`.
    pub se: f64,
    pub n_total: u64,
}

impl ChshSummary {
    /// Builds the summary from per-cell product sums and counts.
    pub fn from_cell_sums(sums: [i64; 4], counts: [u64; 4]) -> Result<Self> {
        let mut corr = [0.0; 4];
        for cell in 0..4 {
            if counts[cell] == 0 {
                let p = SettingPair::from_cell(cell);
                return Err(Error::UndefinedCorrelation { x: p.x, y: p.y });
            }
            corr[cell] = sums[cell] as f64 / counts[cell] as f64;
        }
        let s = corr[0] + corr[1] + corr[2] - corr[3];
        let var: f64 = (0..4)
            .map(|c| (1.0 - corr[c] * corr[c]) / counts[c] as f64)
            .sum();
        Ok(ChshSummary {
            corr,
            counts,
            s,
            se: var.max(0.0).sqrt(),
            n_total: counts.iter().sum(),
        })
    }

    pub const CSV_HEADER: &'static str = "n_total,n00,n01,n10,n11,e00,e01,e10,e11,s,se";

    pub fn csv_record(&self) -> String {
        let c = &self.counts;
        let e = &self.corr;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n_total, c[0], c[1], c[2], c[3], e[0], e[1], e[2], e[3], self.s, self.se
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_record())
    }
}

/// Per-cell integer product sums and counts for a list of runs.
pub fn cell_sums(runs: &[ObservedRun]) -> ([i64; 4], [u64; 4]) {
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    for r in runs {
        let c = r.cell();
        sums[c] += r.product() as i64;
        counts[c] += 1;
    }
    (sums, counts)
}

pub fn observed_correlations(runs: &[ObservedRun]) -> Result<ChshSummary> {
    let (sums, counts) = cell_sums(runs);
    ChshSummary::from_cell_sums(sums, counts)
}

/// Runs as CSV `x,y,a,b`.
pub fn write_runs_csv<W: Write>(runs: &[ObservedRun], mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,y,a,b")?;
    for r in runs {
        writeln!(w, "{},{},{},{}", r.x, r.y, r.a_out, r.b_out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use crate::table::sample_settings;

    fn all_rows() -> Vec<CounterfactualRow> {
        (0..16u8)
            .map(|m| {
                let bit = |k: u8| if m >> k & 1 == 1 { -1 } else { 1 };
                CounterfactualRow::from_values([bit(3), bit(2), bit(1), bit(0)])
            })
            .collect()
    }

    #[test]
    fn row_term_examples() {
        assert_eq!(
            row_chsh_term(&CounterfactualRow::from_values([1, 1, 1, 1])),
            2
        );
        assert_eq!(
            row_chsh_term(&CounterfactualRow::from_values([-1, 1, 1, 1])),
            -2
        );
        assert_eq!(
            row_chsh_term(&CounterfactualRow::from_values([1, 1, 1, -1])),
            2
        );
    }

    #[test]
    fn row_term_is_pm2_exhaustively() {
        // oracle: A(B+B′) + A′(B−B′), one bracket vanishes, the other is ±2
        for r in all_rows() {
            let [a, ap, b, bp] = r.values();
            let oracle = if b == bp { 2 * a * b } else { 2 * ap * b };
            assert_eq!(row_chsh_term(&r), oracle);
            assert!(matches!(row_chsh_term(&r), 2 | -2));
        }
    }

    #[test]
    fn full_table_examples() {
        let ones = CounterfactualRow::from_values([1, 1, 1, 1]);
        let t = CounterfactualTable::new(vec![ones; 4]).unwrap();
        assert_eq!(full_table_chsh(&t).unwrap(), 2.0);
        let t =
            CounterfactualTable::new(vec![ones, CounterfactualRow::from_values([-1, -1, -1, -1])])
                .unwrap();
        assert_eq!(full_table_chsh(&t).unwrap(), 2.0);
    }

    #[test]
    fn full_table_chsh_equals_combination_of_column_correlations() {
        let t = CounterfactualTable::new(all_rows()).unwrap();
        let e: Vec<f64> = (0..4)
            .map(|c| full_table_correlation(&t, SettingPair::from_cell(c)))
            .collect();
        let combo = e[0] + e[1] + e[2] - e[3];
        assert!((full_table_chsh(&t).unwrap() - combo).abs() < 1e-15);
    }

    #[test]
    fn observe_selects_columns() {
        let t = CounterfactualTable::new(vec![CounterfactualRow::from_values([1, -1, -1, 1]); 2])
            .unwrap();
        let s = SettingsStream::new(vec![SettingPair { x: 0, y: 0 }, SettingPair { x: 1, y: 1 }]);
        let runs = observe(&t, &s).unwrap();
        assert_eq!((runs[0].a_out, runs[0].b_out), (Sign::Plus, Sign::Minus));
        assert_eq!((runs[1].a_out, runs[1].b_out), (Sign::Minus, Sign::Plus));
        assert_eq!(runs[1].row_index, 1);
    }

    #[test]
    fn observe_length_mismatch() {
        let t = CounterfactualTable::new(vec![CounterfactualRow::from_values([1, 1, 1, 1]); 3])
            .unwrap();
        let s = sample_settings(2, RngSeed(0)).unwrap();
        assert!(matches!(
            observe(&t, &s),
            Err(Error::LengthMismatch {
                table: 3,
                settings: 2
            })
        ));
    }

    #[test]
    fn empty_cell_is_an_error() {
        let runs: Vec<ObservedRun> = (0..5)
            .map(|i| ObservedRun {
                x: 0,
                y: 0,
                a_out: Sign::Plus,
                b_out: Sign::Plus,
                row_index: i,
            })
            .collect();
        let err = observed_correlations(&runs).unwrap_err();
        assert!(err.to_string().contains("undefined correlation"));
    }

    fn synthetic_runs(sums: [i64; 4], counts: [u64; 4]) -> Vec<ObservedRun> {
        let mut runs = Vec::new();
        for cell in 0..4 {
            let p = SettingPair::from_cell(cell);
            let plus = (counts[cell] as i64 + sums[cell]) / 2;
            for k in 0..counts[cell] as i64 {
                runs.push(ObservedRun {
                    x: p.x,
                    y: p.y,
                    a_out: Sign::Plus,
                    b_out: Sign::from_bool(k < plus),
                    row_index: runs.len(),
                });
            }
        }
        runs
    }

    #[test]
    fn summary_of_synthetic_singlet_like_data() {
        // per-cell correlations ±1/√2 realised exactly through from_cell_sums
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let counts = [1_000_000u64; 4];
        let sums = [707_107i64, 707_107, 707_107, -707_107];
        let sum = ChshSummary::from_cell_sums(sums, counts).unwrap();
        assert!((sum.s - 4.0 * r).abs() < 1e-5);
        assert!((sum.s - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn se_matches_binomial_variance_oracle() {
        let sums = [40, -12, 6, -30];
        let counts = [100, 90, 110, 120];
        let runs = synthetic_runs(sums, counts);
        let sum = observed_correlations(&runs).unwrap();
        // oracle: the sample variance (1/n)Σ(p−mean)² of ±1 products, over n
        let mut var_s = 0.0;
        for cell in 0..4 {
            let prods: Vec<f64> = runs
                .iter()
                .filter(|r| r.cell() == cell)
                .map(|r| r.product() as f64)
                .collect();
            let n = prods.len() as f64;
            let mean = prods.iter().sum::<f64>() / n;
            let v = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
            var_s += v / n;
        }
        assert!((sum.se * sum.se - var_s).abs() < 1e-14);
        assert_eq!(sum.n_total, 420);
        assert_eq!(sum.counts, counts);
    }

    #[test]
    fn summary_csv_has_fixed_header() {
        let sum = ChshSummary::from_cell_sums([1, 1, 1, -1], [1, 1, 1, 1]).unwrap();
        let mut out = Vec::new();
        sum.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "n_total,n00,n01,n10,n11,e00,e01,e10,e11,s,se\n4,1,1,1,1,1,1,1,-1,4,0\n"
        );
    }
}
