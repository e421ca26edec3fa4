//! The counterfactual spreadsheet and the settings that select from it.
//!
//! Files:
//! * table CSV: header `A,Ap,B,Bp`, one row per run, values `1` or `-1`;
//! * settings CSV: header `x,y`, values `0` or `1`.

use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{BellRng, RngSeed};

/// A measurement outcome, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub const fn from_bool(plus: bool) -> Self {
        if plus {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    /// Outcome bit under the global convention `+1 ↦ 0`, `-1 ↦ 1`.
    pub const fn bit(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub const fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        Sign::from_bool(self == rhs)
    }
}

impl std::ops::Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        Sign::from_bool(self == Sign::Minus)
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("expected 1 or -1, got {other}")),
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = String;
    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("expected 1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        s.value()
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl FromStr for Sign {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "1" | "+1" => Ok(Sign::Plus),
            "-1" => Ok(Sign::Minus),
            other => Err(format!("expected 1 or -1, got `{other}`")),
        }
    }
}

/// One run's outcomes under all four local settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CounterfactualRow {
    pub a: Sign,
    pub a_prime: Sign,
    pub b: Sign,
    pub b_prime: Sign,
}

impl CounterfactualRow {
    pub const fn new(a: Sign, a_prime: Sign, b: Sign, b_prime: Sign) -> Self {
        CounterfactualRow {
            a,
            a_prime,
            b,
            b_prime,
        }
    }

    /// Builds a row from integer values; panics unless each is `±1`.
    pub fn from_values(v: [i8; 4]) -> Self {
        let s = |x: i8| Sign::try_from(x).expect("row values must be ±1");
        Self::new(s(v[0]), s(v[1]), s(v[2]), s(v[3]))
    }

    pub const fn values(&self) -> [i8; 4] {
        [
            self.a.value(),
            self.a_prime.value(),
            self.b.value(),
            self.b_prime.value(),
        ]
    }

    pub const fn alice(&self, x: u8) -> Sign {
        if x == 0 {
            self.a
        } else {
            self.a_prime
        }
    }

    pub const fn bob(&self, y: u8) -> Sign {
        if y == 0 {
            self.b
        } else {
            self.b_prime
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualTable {
    rows: Vec<CounterfactualRow>,
}

impl CounterfactualTable {
    pub fn new(rows: Vec<CounterfactualRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(CounterfactualTable { rows })
    }

    pub fn rows(&self) -> &[CounterfactualRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn into_rows(self) -> Vec<CounterfactualRow> {
        self.rows
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let rows = read_records(reader, &["A", "Ap", "B", "Bp"], |line, fields| {
            let mut v = [Sign::Plus; 4];
            for (slot, f) in v.iter_mut().zip(fields) {
                *slot = f.parse().map_err(|e: String| Error::parse(line, e))?;
            }
            Ok(CounterfactualRow::new(v[0], v[1], v[2], v[3]))
        })?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "A,Ap,B,Bp")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.a, r.a_prime, r.b, r.b_prime)?;
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.rows.len() * 10);
        self.write_csv(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}

/// `x` selects A (0) or A′ (1); `y` selects B (0) or B′ (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SettingPair {
    pub x: u8,
    pub y: u8,
}

impl SettingPair {
    pub fn new(x: u8, y: u8) -> Result<Self> {
        if x > 1 || y > 1 {
            return Err(Error::invalid(
                "setting",
                format!("bits must be 0 or 1, got ({x},{y})"),
            ));
        }
        Ok(SettingPair { x, y })
    }

    /// Cell index in the fixed order (0,0),(0,1),(1,0),(1,1).
    pub const fn cell(self) -> usize {
        (self.x as usize) * 2 + self.y as usize
    }

    pub const fn from_cell(cell: usize) -> Self {
        SettingPair {
            x: (cell >> 1) as u8 & 1,
            y: cell as u8 & 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingsStream {
    pairs: Vec<SettingPair>,
}

impl SettingsStream {
    pub fn new(pairs: Vec<SettingPair>) -> Self {
        SettingsStream { pairs }
    }

    /// The same setting pair repeated `n` times.
    pub fn constant(pair: SettingPair, n: usize) -> Self {
        SettingsStream {
            pairs: vec![pair; n],
        }
    }

    pub fn pairs(&self) -> &[SettingPair] {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn cell_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for p in &self.pairs {
            counts[p.cell()] += 1;
        }
        counts
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let pairs = read_records(reader, &["x", "y"], |line, fields| {
            let bit = |s: &str| match s.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::parse(
                    line,
                    format!("expected 0 or 1, got `{other}`"),
                )),
            };
            Ok(SettingPair {
                x: bit(fields[0])?,
                y: bit(fields[1])?,
            })
        })?;
        Ok(Self::new(pairs))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y")?;
        for p in &self.pairs {
            writeln!(w, "{},{}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// `n` independent fair setting pairs from the settings stream of `seed`.
pub fn sample_settings(n: usize, seed: RngSeed) -> Result<SettingsStream> {
    if n == 0 {
        return Err(Error::ZeroLength { what: "n" });
    }
    let mut rng = BellRng::new(seed);
    Ok(sample_settings_with(n, &mut rng))
}

pub fn sample_settings_with(n: usize, rng: &mut BellRng) -> SettingsStream {
    let pairs = (0..n)
        .map(|_| {
            let (x, y) = rng.next_setting_pair();
            SettingPair { x, y }
        })
        .collect();
    SettingsStream { pairs }
}

/// Parses a headed CSV, mapping each record (1-based line numbers, header on
/// line 1) through `f`.
fn read_records<R, T, F>(reader: R, header: &[&str], mut f: F) -> Result<Vec<T>>
where
    R: std::io::Read,
    F: FnMut(usize, &[&str]) -> Result<T>,
{
    let buf = std::io::BufReader::new(reader);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in buf.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !saw_header {
            if fields != header {
                return Err(Error::parse(
                    line_no,
                    format!("expected header `{}`, got `{line}`", header.join(",")),
                ));
            }
            saw_header = true;
            continue;
        }
        if fields.len() != header.len() {
            return Err(Error::parse(
                line_no,
                format!("expected {} fields, got {}", header.len(), fields.len()),
            ));
        }
        out.push(f(line_no, &fields)?);
    }
    if !saw_header {
        return Err(Error::parse(1, "missing header"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_arithmetic() {
        assert_eq!(Sign::Plus * Sign::Minus, Sign::Minus);
        assert_eq!(Sign::Minus * Sign::Minus, Sign::Plus);
        assert_eq!(-Sign::Plus, Sign::Minus);
        assert_eq!(Sign::from_bit(Sign::Minus.bit()), Sign::Minus);
        assert!(Sign::try_from(0i8).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let t = CounterfactualTable::new(vec![
            CounterfactualRow::from_values([1, -1, -1, 1]),
            CounterfactualRow::from_values([-1, -1, 1, 1]),
        ])
        .unwrap();
        let bytes = t.to_csv_bytes();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            "A,Ap,B,Bp\n1,-1,-1,1\n-1,-1,1,1\n"
        );
        assert_eq!(CounterfactualTable::read_csv(&bytes[..]).unwrap(), t);
    }

    #[test]
    fn table_csv_rejects_bad_value() {
        let err =
            CounterfactualTable::read_csv("A,Ap,B,Bp\n1,1,1,1\n1,0,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn table_csv_rejects_bad_header_and_empty() {
        assert!(CounterfactualTable::read_csv("a,b,c,d\n".as_bytes()).is_err());
        assert!(matches!(
            CounterfactualTable::read_csv("A,Ap,B,Bp\n".as_bytes()),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn settings_csv_round_trip() {
        let s = sample_settings(20, RngSeed(5)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,y\n"));
        assert_eq!(SettingsStream::read_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn sample_settings_deterministic() {
        let a = sample_settings(4, RngSeed(77)).unwrap();
        let b = sample_settings(4, RngSeed(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 4);
    }

    #[test]
    fn sample_settings_rejects_zero() {
        assert!(matches!(
            sample_settings(0, RngSeed(1)),
            Err(Error::ZeroLength { .. })
        ));
    }

    #[test]
    fn single_pair_cells_are_uniform() {
        // n = 1 draws one pair; across seeds each of the 4 cells shows up ~1/4
        let mut counts = [0usize; 4];
        for s in 0..40_000u64 {
            let st = sample_settings(1, RngSeed(s)).unwrap();
            assert_eq!(st.n(), 1);
            counts[st.pairs()[0].cell()] += 1;
        }
        for c in counts {
            let f = c as f64 / 40_000.0;
            assert!((f - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn million_settings_cell_frequencies() {
        // 4σ for Bin(1e6, 1/4) frequency is 4·sqrt(3/16/1e6) ≈ 0.0017 < 0.002
        let s = sample_settings(1_000_000, RngSeed(2024)).unwrap();
        for c in s.cell_counts() {
            let f = c as f64 / 1e6;
            assert!((f - 0.25).abs() < 0.002, "{f}");
        }
    }

    #[test]
    fn cell_index_order() {
        for cell in 0..4 {
            assert_eq!(SettingPair::from_cell(cell).cell(), cell);
        }
        assert_eq!(SettingPair { x: 0, y: 1 }.cell(), 1);
        assert_eq!(SettingPair { x: 1, y: 0 }.cell(), 2);
    }
}
