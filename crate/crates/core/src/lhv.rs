//! Local hidden variable models: deterministic strategies, their mixtures,
//! and a detection-loophole cheater that fakes any target behavior on the
//! coincidences by going undetected when the settings are not the ones it
//! wanted.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chsh::ObservedRun;
use crate::error::{Error, Result};
use crate::polytope::{validate, Behavior};
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};
use crate::table::{sample_settings, CounterfactualRow, CounterfactualTable, Sign};

/// Per-wing detection probability that, composed with the cheater's own
/// ½ per-wing detection rate, yields one coincidence, 2×19 singles and 361
/// unseen pairs per 400 emissions (coincidences thinned by 1/100).
pub const WEIHS_WING_THINNING: f64 = 0.1;

/// Outcomes prescribed for each local setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub a0: Sign,
    pub a1: Sign,
    pub b0: Sign,
    pub b1: Sign,
}

impl DeterministicStrategy {
    pub fn alice(&self, x: u8) -> Sign {
        if x == 0 {
            self.a0
        } else {
            self.a1
        }
    }

    pub fn bob(&self, y: u8) -> Sign {
        if y == 0 {
            self.b0
        } else {
            self.b1
        }
    }

    pub fn row(&self) -> CounterfactualRow {
        CounterfactualRow::new(self.a0, self.a1, self.b0, self.b1)
    }

    /// Position in [`enumerate_deterministic`].
    pub fn index(&self) -> usize {
        let bit = |s: Sign| (s == Sign::Plus) as usize;
        bit(self.a0) << 3 | bit(self.a1) << 2 | bit(self.b0) << 1 | bit(self.b1)
    }
}

/// All 16 strategies, ordered as a 4-bit big-endian counter over
/// `(a0, a1, b0, b1)` with bit 0 ↦ −1 and bit 1 ↦ +1.
pub fn enumerate_deterministic() -> Vec<DeterministicStrategy> {
    (0..16u8)
        .map(|i| {
            let s = |k: u8| Sign::from_bool(i >> k & 1 == 1);
            DeterministicStrategy {
                a0: s(3),
                a1: s(2),
                b0: s(1),
                b1: s(0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LhvKind {
    Deterministic,
    Mixture,
}

/// A probability mixture of deterministic strategies; the sampled strategy
/// is the hidden variable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhvModel {
    kind: LhvKind,
    strategies: Vec<DeterministicStrategy>,
    weights: Vec<f64>,
}

impl LhvModel {
    pub fn deterministic(strategy: DeterministicStrategy) -> Self {
        LhvModel {
            kind: LhvKind::Deterministic,
            strategies: vec![strategy],
            weights: vec![1.0],
        }
    }

    pub fn mixture(strategies: Vec<DeterministicStrategy>, weights: Vec<f64>) -> Result<Self> {
        if strategies.is_empty() || strategies.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} strategies with {} weights",
                strategies.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!(
                "negative or non-finite weight {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(LhvModel {
            kind: LhvKind::Mixture,
            strategies,
            weights,
        })
    }

    /// Equal weight on all 16 strategies.
    pub fn uniform() -> Self {
        Self::mixture(enumerate_deterministic(), vec![1.0 / 16.0; 16])
            .expect("uniform weights are valid")
    }

    /// Equal weight on the 8 strategies whose row term is +2, so the full
    /// table sits exactly on the CHSH boundary S = 2.
    pub fn boundary_saturating() -> Self {
        let strategies: Vec<_> = enumerate_deterministic()
            .into_iter()
            .filter(|s| crate::chsh::row_chsh_term(&s.row()) == 2)
            .collect();
        let w = 1.0 / strategies.len() as f64;
        let n = strategies.len();
        Self::mixture(strategies, vec![w; n]).expect("uniform weights are valid")
    }

    pub fn kind(&self) -> LhvKind {
        self.kind
    }

    pub fn strategies(&self) -> &[DeterministicStrategy] {
        &self.strategies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws a strategy with one `next_f64`.
    pub fn sample(&self, rng: &mut BellRng) -> DeterministicStrategy {
        self.strategies[rng.pick_weighted(&self.weights)]
    }

    /// The behavior the model induces.
    pub fn behavior(&self) -> Behavior {
        Behavior::mixture(
            &self
                .strategies
                .iter()
                .zip(&self.weights)
                .map(|(s, &w)| (w, s.behavior()))
                .collect::<Vec<_>>(),
        )
    }
}

/// `n` independent rows from the model stream of `seed`.
pub fn generate_table(model: &LhvModel, n: usize, seed: RngSeed) -> Result<CounterfactualTable> {
    if n == 0 {
        return Err(Error::ZeroLength { what: "n" });
    }
    let mut rng = BellRng::with_stream(seed, MODEL_STREAM);
    generate_table_with(model, n, &mut rng)
}

pub fn generate_table_with(
    model: &LhvModel,
    n: usize,
    rng: &mut BellRng,
) -> Result<CounterfactualTable> {
    CounterfactualTable::new((0..n).map(|_| model.sample(rng).row()).collect())
}

/// `+1`, `−1`, or no detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum TernaryOutcome {
    Plus,
    Minus,
    NoDetection,
}

impl TernaryOutcome {
    pub fn value(self) -> i8 {
        match self {
            TernaryOutcome::Plus => 1,
            TernaryOutcome::Minus => -1,
            TernaryOutcome::NoDetection => 0,
        }
    }

    pub fn detected(self) -> Option<Sign> {
        match self {
            TernaryOutcome::Plus => Some(Sign::Plus),
            TernaryOutcome::Minus => Some(Sign::Minus),
            TernaryOutcome::NoDetection => None,
        }
    }
}

impl From<Sign> for TernaryOutcome {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Plus => TernaryOutcome::Plus,
            Sign::Minus => TernaryOutcome::Minus,
        }
    }
}

impl TryFrom<i8> for TernaryOutcome {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(TernaryOutcome::Plus),
            -1 => Ok(TernaryOutcome::Minus),
            0 => Ok(TernaryOutcome::NoDetection),
            o => Err(format!("expected 1, -1 or 0, got {o}")),
        }
    }
}

impl From<TernaryOutcome> for i8 {
    fn from(t: TernaryOutcome) -> i8 {
        t.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheaterConfig {
    /// Behavior reproduced on coincidences.
    pub target: Behavior,
    /// Independent per-wing probability that an intended detection is kept.
    pub wing_thinning: f64,
}

impl CheaterConfig {
    pub fn new(target: Behavior) -> Result<Self> {
        Self::with_thinning(target, 1.0)
    }

    pub fn with_thinning(target: Behavior, wing_thinning: f64) -> Result<Self> {
        let flags = validate(&target);
        if !flags.positivity || !flags.normalization {
            return Err(Error::InvalidBehavior(format!(
                "cheater target fails validation: {flags:?}"
            )));
        }
        if !(wing_thinning > 0.0 && wing_thinning <= 1.0) {
            return Err(Error::invalid(
                "wing_thinning",
                format!("must lie in (0, 1], got {wing_thinning}"),
            ));
        }
        Ok(CheaterConfig {
            target,
            wing_thinning,
        })
    }

    /// Thinned to the 1-in-20 per-wing pairing rate.
    pub fn weihs(target: Behavior) -> Result<Self> {
        Self::with_thinning(target, WEIHS_WING_THINNING)
    }
}

/// One emission against actual settings `(x, y)`.
///
/// Consumes exactly four draws: one `next_u64` for the desired setting pair,
/// one `next_f64` for the outcome pair (inverse CDF over the target context
/// in order ++, +−, −+, −−), and one `next_f64` per wing for thinning.
pub fn cheater_run(
    config: &CheaterConfig,
    x: u8,
    y: u8,
    rng: &mut BellRng,
) -> (TernaryOutcome, TernaryOutcome) {
    let (want_x, want_y) = rng.next_setting_pair();
    let ctx = config.target.context(want_x, want_y);
    let u = rng.next_f64() * ctx.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut cell = 3;
    for (k, p) in ctx.iter().enumerate() {
        acc += p;
        if u < acc {
            cell = k;
            break;
        }
    }
    let a = Sign::from_bit((cell >> 1) as u8);
    let b = Sign::from_bit((cell & 1) as u8);
    let keep_a = rng.next_f64() < config.wing_thinning;
    let keep_b = rng.next_f64() < config.wing_thinning;
    let ta = if x == want_x && keep_a {
        a.into()
    } else {
        TernaryOutcome::NoDetection
    };
    let tb = if y == want_y && keep_b {
        b.into()
    } else {
        TernaryOutcome::NoDetection
    };
    (ta, tb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoopholeSource {
    /// Always detected in both wings.
    Honest {
        model: LhvModel,
    },
    Cheater {
        config: CheaterConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TernaryRecord {
    pub x: u8,
    pub y: u8,
    pub a: TernaryOutcome,
    pub b: TernaryOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub both: u64,
    pub exactly_one: u64,
    pub none: u64,
}

impl DetectionCounts {
    pub fn total(&self) -> u64 {
        self.both + self.exactly_one + self.none
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopholeDataset {
    pub records: Vec<TernaryRecord>,
    pub counts: DetectionCounts,
}

impl LoopholeDataset {
    /// Both-detected emissions as observed runs (row index = emission index).
    pub fn coincidences(&self) -> Vec<ObservedRun> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                Some(ObservedRun {
                    x: r.x,
                    y: r.y,
                    a_out: r.a.detected()?,
                    b_out: r.b.detected()?,
                    row_index: i,
                })
            })
            .collect()
    }

    /// CSV `x,y,a,b` with `0` for no detection.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,a,b")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.x, r.y, r.a.value(), r.b.value())?;
        }
        Ok(())
    }
}

/// `n` emissions with fair random settings and ternary outcomes.
pub fn simulate_loophole_experiment(
    source: &LoopholeSource,
    n: usize,
    seed: RngSeed,
) -> Result<LoopholeDataset> {
    let settings = sample_settings(n, seed)?;
    let mut rng = BellRng::with_stream(seed, MODEL_STREAM);
    let mut counts = DetectionCounts::default();
    let records: Vec<TernaryRecord> = settings
        .pairs()
        .iter()
        .map(|p| {
            let (a, b) = match source {
                LoopholeSource::Honest { model } => {
                    let s = model.sample(&mut rng);
                    (s.alice(p.x).into(), s.bob(p.y).into())
                }
                LoopholeSource::Cheater { config } => cheater_run(config, p.x, p.y, &mut rng),
            };
            match (a.detected().is_some(), b.detected().is_some()) {
                (true, true) => counts.both += 1,
                (false, false) => counts.none += 1,
                _ => counts.exactly_one += 1,
            }
            TernaryRecord {
                x: p.x,
                y: p.y,
                a,
                b,
            }
        })
        .collect();
    Ok(LoopholeDataset { records, counts })
}
