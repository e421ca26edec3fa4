//! Behaviors of the two-party, two-setting, two-outcome scenario and their
//! position relative to the local polytope, the Tsirelson bound and the
//! no-signalling polytope.
//!
//! A behavior stores `p(a,b|x,y)` at index `4·(2x + y) + 2·bit(a) + bit(b)`
//! where `bit(+1) = 0` and `bit(−1) = 1`.

mod lp;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::TSIRELSON;
use crate::error::{Error, Result};
use crate::lhv::{enumerate_deterministic, DeterministicStrategy};
use crate::quantum::{joint_outcome_table, AngleSet};
use crate::table::{SettingPair, Sign};

pub use lp::find_nonnegative_solution;

/// Tolerance for positivity, normalization and no-signalling checks.
pub const VALIDATE_TOL: f64 = 1e-9;
/// Slack allowed above 2 (local) and 2√2 (quantum) when classifying.
pub const FACET_TOL: f64 = 1e-9;
/// Tolerance of the vertex-mixture feasibility solver.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// CHSH sign patterns on (E00, E01, E10, E11); each has an odd number of
/// minus signs. Facet 0 is the usual `E00 + E01 + E10 − E11`.
pub const FACET_SIGNS: [[i8; 4]; 8] = [
    [1, 1, 1, -1],
    [1, 1, -1, 1],
    [1, -1, 1, 1],
    [-1, 1, 1, 1],
    [-1, -1, -1, 1],
    [-1, -1, 1, -1],
    [-1, 1, -1, -1],
    [1, -1, -1, -1],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub p: [f64; 16],
}

pub const fn index(x: u8, y: u8, a: Sign, b: Sign) -> usize {
    4 * (2 * x as usize + y as usize) + 2 * a.bit() as usize + b.bit() as usize
}

impl Behavior {
    pub fn new(p: [f64; 16]) -> Self {
        Behavior { p }
    }

    pub fn from_fn(mut f: impl FnMut(u8, u8, Sign, Sign) -> f64) -> Self {
        let mut p = [0.0; 16];
        for (i, slot) in p.iter_mut().enumerate() {
            let (x, y) = ((i >> 3) as u8 & 1, (i >> 2) as u8 & 1);
            let (a, b) = (
                Sign::from_bit((i >> 1) as u8 & 1),
                Sign::from_bit(i as u8 & 1),
            );
            *slot = f(x, y, a, b);
        }
        Behavior { p }
    }

    pub fn get(&self, x: u8, y: u8, a: Sign, b: Sign) -> f64 {
        self.p[index(x, y, a, b)]
    }

    /// Cell `(x, y)` as (p++, p+−, p−+, p−−).
    pub fn context(&self, x: u8, y: u8) -> [f64; 4] {
        let base = 4 * (2 * x as usize + y as usize);
        [
            self.p[base],
            self.p[base + 1],
            self.p[base + 2],
            self.p[base + 3],
        ]
    }

    /// E(x, y) = Σ ab·p(a,b|x,y).
    pub fn correlation(&self, x: u8, y: u8) -> f64 {
        let [pp, pm, mp, mm] = self.context(x, y);
        pp + mm - pm - mp
    }

    pub fn correlations(&self) -> [f64; 4] {
        std::array::from_fn(|c| {
            let s = SettingPair::from_cell(c);
            self.correlation(s.x, s.y)
        })
    }

    /// Alice's marginal p(a|x) computed in context y.
    pub fn alice_marginal(&self, a: Sign, x: u8, y: u8) -> f64 {
        self.get(x, y, a, Sign::Plus) + self.get(x, y, a, Sign::Minus)
    }

    pub fn bob_marginal(&self, b: Sign, x: u8, y: u8) -> f64 {
        self.get(x, y, Sign::Plus, b) + self.get(x, y, Sign::Minus, b)
    }

    /// Convex combination `Σ w_k · behaviors_k`.
    pub fn mixture(parts: &[(f64, Behavior)]) -> Behavior {
        let mut p = [0.0; 16];
        for (w, b) in parts {
            for (acc, v) in p.iter_mut().zip(b.p.iter()) {
                *acc += w * v;
            }
        }
        Behavior { p }
    }

    /// Swaps Alice's two settings.
    pub fn swap_alice_settings(&self) -> Behavior {
        Behavior::from_fn(|x, y, a, b| self.get(1 - x, y, a, b))
    }

    pub const CSV_HEADER: &'static str = "x,y,a,b,p";

    /// 16 rows `x,y,a,b,p` in storage order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for x in 0..2 {
            for y in 0..2 {
                for a in [Sign::Plus, Sign::Minus] {
                    for b in [Sign::Plus, Sign::Minus] {
                        writeln!(w, "{x},{y},{a},{b},{}", self.get(x, y, a, b))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads the 16-row CSV; every `(x,y,a,b)` must appear exactly once.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if headers != Self::CSV_HEADER {
            return Err(Error::parse(
                1,
                format!("expected header `{}`, got `{headers}`", Self::CSV_HEADER),
            ));
        }
        let mut p = [0.0; 16];
        let mut seen = [false; 16];
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            if rec.len() != 5 {
                return Err(Error::parse(
                    line,
                    format!("expected 5 fields, got {}", rec.len()),
                ));
            }
            let bit = |s: &str| match s {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                o => Err(Error::parse(
                    line,
                    format!("setting must be 0 or 1, got `{o}`"),
                )),
            };
            let sign = |s: &str| s.parse::<Sign>().map_err(|e| Error::parse(line, e));
            let (x, y) = (bit(&rec[0])?, bit(&rec[1])?);
            let (a, b) = (sign(&rec[2])?, sign(&rec[3])?);
            let v: f64 = rec[4]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad probability `{}`", &rec[4])))?;
            let k = index(x, y, a, b);
            if seen[k] {
                return Err(Error::parse(
                    line,
                    format!("duplicate entry ({x},{y},{a},{b})"),
                ));
            }
            seen[k] = true;
            p[k] = v;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidBehavior(format!(
                "missing entry at index {k}"
            )));
        }
        Ok(Behavior { p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFlags {
    pub positivity: bool,
    pub normalization: bool,
    pub no_signalling: bool,
}

impl ValidationFlags {
    pub fn all(&self) -> bool {
        self.positivity && self.normalization && self.no_signalling
    }
}

pub fn validate(behavior: &Behavior) -> ValidationFlags {
    let positivity = behavior
        .p
        .iter()
        .all(|&v| v.is_finite() && v >= -VALIDATE_TOL);
    let normalization = (0..4).all(|c| {
        let s = SettingPair::from_cell(c);
        (behavior.context(s.x, s.y).iter().sum::<f64>() - 1.0).abs() <= VALIDATE_TOL
    });
    let mut no_signalling = true;
    for v in 0..2u8 {
        for s in [Sign::Plus, Sign::Minus] {
            // Alice's marginal may not depend on y; Bob's may not depend on x
            let da = behavior.alice_marginal(s, v, 0) - behavior.alice_marginal(s, v, 1);
            let db = behavior.bob_marginal(s, 0, v) - behavior.bob_marginal(s, 1, v);
            if da.abs() > VALIDATE_TOL || db.abs() > VALIDATE_TOL {
                no_signalling = false;
            }
        }
    }
    ValidationFlags {
        positivity,
        normalization,
        no_signalling,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetReport {
    /// Facet functional values in [`FACET_SIGNS`] order; local iff all ≤ 2.
    pub values: [f64; 8],
    pub max_abs: f64,
    /// Facets whose value exceeds 2 (beyond [`FACET_TOL`]).
    pub violated_facets: Vec<usize>,
}

pub fn facet_values(correlations: &[f64; 4]) -> [f64; 8] {
    std::array::from_fn(|k| {
        FACET_SIGNS[k]
            .iter()
            .zip(correlations)
            .map(|(&s, e)| s as f64 * e)
            .sum()
    })
}

pub fn chsh_facets(behavior: &Behavior) -> Result<FacetReport> {
    if !validate(behavior).normalization {
        return Err(Error::InvalidBehavior("contexts are not normalized".into()));
    }
    let values = facet_values(&behavior.correlations());
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let violated_facets = (0..8).filter(|&k| values[k] > 2.0 + FACET_TOL).collect();
    Ok(FacetReport {
        values,
        max_abs,
        violated_facets,
    })
}

impl DeterministicStrategy {
    /// The 0/1 behavior this strategy induces.
    pub fn behavior(&self) -> Behavior {
        Behavior::from_fn(|x, y, a, b| (a == self.alice(x) && b == self.bob(y)) as u8 as f64)
    }
}

/// The 16 local-deterministic behaviors, in strategy enumeration order.
pub fn local_vertices() -> Vec<Behavior> {
    enumerate_deterministic()
        .iter()
        .map(DeterministicStrategy::behavior)
        .collect()
}

/// Singlet predictions for each setting pair.
pub fn quantum_behavior(angles: &AngleSet) -> Behavior {
    Behavior::from_fn(|x, y, a, b| joint_outcome_table(angles.difference(x, y)).probability(a, b))
}

/// `p(a,b|x,y) = ½` when `bit(a) ⊕ bit(b) = x ∧ y`, else 0.
pub fn pr_box() -> Behavior {
    Behavior::from_fn(|x, y, a, b| if a.bit() ^ b.bit() == x & y { 0.5 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Local,
    /// Between the local polytope and the Tsirelson bound; membership of the
    /// quantum set is not decided.
    QuantumCompatibleUnknown,
    NoSignallingSuperquantum,
    Signalling,
    Invalid,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Local => "local",
            Classification::QuantumCompatibleUnknown => "quantum-compatible-unknown",
            Classification::NoSignallingSuperquantum => "no-signalling-superquantum",
            Classification::Signalling => "signalling",
            Classification::Invalid => "invalid",
        };
        f.write_str(s)
    }
}

pub fn classify(behavior: &Behavior) -> Classification {
    let flags = validate(behavior);
    if !flags.positivity || !flags.normalization {
        return Classification::Invalid;
    }
    if !flags.no_signalling {
        return Classification::Signalling;
    }
    let max = facet_values(&behavior.correlations())
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max <= 2.0 + FACET_TOL {
        Classification::Local
    } else if max > TSIRELSON + FACET_TOL {
        Classification::NoSignallingSuperquantum
    } else {
        Classification::QuantumCompatibleUnknown
    }
}

/// Weights over [`local_vertices`] reproducing `behavior`, if any exist.
pub fn local_mixture_weights(behavior: &Behavior) -> Option<[f64; 16]> {
    let vertices = local_vertices();
    let mut a: Vec<Vec<f64>> = (0..16)
        .map(|i| vertices.iter().map(|v| v.p[i]).collect())
        .collect();
    let mut b: Vec<f64> = behavior.p.to_vec();
    a.push(vec![1.0; 16]);
    b.push(1.0);
    let w = find_nonnegative_solution(&a, &b, FEASIBILITY_TOL)?;
    Some(std::array::from_fn(|k| w[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::canonical_angles;
    use std::f64::consts::SQRT_2;

    #[test]
    fn uniform_behavior_is_valid() {
        let u = Behavior::new([0.25; 16]);
        assert!(validate(&u).all());
        assert_eq!(classify(&u), Classification::Local);
    }

    #[test]
    fn short_context_fails_normalization() {
        let mut p = [0.25; 16];
        p[0] = 0.15;
        let flags = validate(&Behavior::new(p));
        assert!(!flags.normalization);
        assert!(flags.positivity);
        assert_eq!(classify(&Behavior::new(p)), Classification::Invalid);
    }

    #[test]
    fn negative_entry_fails_positivity() {
        let mut p = [0.25; 16];
        p[0] = -0.25;
        p[1] = 0.75;
        assert!(!validate(&Behavior::new(p)).positivity);
    }

    #[test]
    fn signalling_table_detected() {
        // Alice always +1 when y = 0, fair coin when y = 1
        let b = Behavior::from_fn(|_, y, a, _| match (y, a) {
            (0, Sign::Plus) => 0.5,
            (0, Sign::Minus) => 0.0,
            _ => 0.25,
        });
        let flags = validate(&b);
        assert!(flags.positivity && flags.normalization);
        assert!(!flags.no_signalling);
        assert_eq!(classify(&b), Classification::Signalling);
    }

    #[test]
    fn vertices_are_deterministic_and_tight() {
        let vs = local_vertices();
        assert_eq!(vs.len(), 16);
        for v in &vs {
            assert!(v.p.iter().all(|&x| x == 0.0 || x == 1.0));
            assert!(validate(v).all());
            let r = chsh_facets(v).unwrap();
            assert_eq!(r.max_abs, 2.0);
            assert!(r.values.iter().all(|&x| x <= 2.0));
            assert!(r.values.iter().any(|&x| x == 2.0));
            assert_eq!(classify(v), Classification::Local);
        }
    }

    #[test]
    fn quantum_canonical_facets() {
        let q = quantum_behavior(&canonical_angles());
        assert!(validate(&q).all());
        let r = chsh_facets(&q).unwrap();
        assert!((r.max_abs - 2.0 * SQRT_2).abs() < 1e-12);
        let at_max = r
            .values
            .iter()
            .filter(|&&v| (v - 2.0 * SQRT_2).abs() < 1e-9)
            .count();
        assert_eq!(at_max, 1);
        assert!((r.values[0] - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(classify(&q), Classification::QuantumCompatibleUnknown);
        let e = q.correlations();
        assert!((e[3] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn equal_angles_give_perfect_anticorrelation() {
        let q = quantum_behavior(&AngleSet::new(0.3, 0.3, 0.3, 0.3));
        for c in 0..4 {
            let s = SettingPair::from_cell(c);
            assert_eq!(q.context(s.x, s.y), [0.0, 0.5, 0.5, 0.0]);
        }
    }

    #[test]
    fn pr_box_properties() {
        let pr = pr_box();
        assert!(validate(&pr).all());
        let r = chsh_facets(&pr).unwrap();
        assert_eq!(r.values[0], 4.0);
        assert_eq!(r.max_abs, 4.0);
        assert_eq!(classify(&pr), Classification::NoSignallingSuperquantum);
        assert!(local_mixture_weights(&pr).is_none());
    }

    #[test]
    fn facets_reject_unnormalized() {
        assert!(chsh_facets(&Behavior::new([0.1; 16])).is_err());
    }

    #[test]
    fn mixture_weights_reproduce_behavior() {
        let vs = local_vertices();
        let mix = Behavior::mixture(&[(0.5, vs[3]), (0.3, vs[10]), (0.2, vs[15])]);
        let w = local_mixture_weights(&mix).unwrap();
        let back = Behavior::mixture(&vs.iter().zip(w).map(|(v, w)| (w, *v)).collect::<Vec<_>>());
        for (x, y) in back.p.iter().zip(mix.p) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_alice_permutes_facets() {
        let q = quantum_behavior(&AngleSet::new(0.1, 1.3, 2.2, 4.0));
        let mut a = chsh_facets(&q).unwrap().values.to_vec();
        let mut b = chsh_facets(&q.swap_alice_settings())
            .unwrap()
            .values
            .to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let q = quantum_behavior(&canonical_angles());
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("x,y,a,b,p\n0,0,1,1,"));
        assert_eq!(Behavior::read_csv(&buf[..]).unwrap(), q);
    }

    #[test]
    fn csv_rejects_missing_and_duplicate_rows() {
        let short = "x,y,a,b,p\n0,0,1,1,0.5\n";
        assert!(Behavior::read_csv(short.as_bytes()).is_err());
        let dup = "x,y,a,b,p\n0,0,1,1,0.5\n0,0,1,1,0.5\n";
        assert!(matches!(
            Behavior::read_csv(dup.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
