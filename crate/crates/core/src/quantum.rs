//! Singlet-state predictions for coplanar spin (or polarisation)
//! measurements and a seeded sampler that plays the quantum side.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::chsh::ObservedRun;
use crate::error::Result;
use crate::rng::{BellRng, RngSeed, MODEL_STREAM};
use crate::table::{sample_settings, SettingPair, Sign};

/// Measurement directions in radians, each reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
}

fn reduce(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl AngleSet {
    pub fn new(alpha: f64, alpha_prime: f64, beta: f64, beta_prime: f64) -> Self {
        AngleSet {
            alpha: reduce(alpha),
            alpha_prime: reduce(alpha_prime),
            beta: reduce(beta),
            beta_prime: reduce(beta_prime),
        }
    }

    pub fn alice(&self, x: u8) -> f64 {
        if x == 0 {
            self.alpha
        } else {
            self.alpha_prime
        }
    }

    pub fn bob(&self, y: u8) -> f64 {
        if y == 0 {
            self.beta
        } else {
            self.beta_prime
        }
    }

    /// Angle between the directions selected by `(x, y)`.
    pub fn difference(&self, x: u8, y: u8) -> f64 {
        self.alice(x) - self.bob(y)
    }

    /// Predicted correlations in cell order.
    pub fn correlations(&self) -> [f64; 4] {
        std::array::from_fn(|c| {
            let p = SettingPair::from_cell(c);
            singlet_correlation(self.alice(p.x), self.bob(p.y))
        })
    }

    pub fn chsh(&self) -> f64 {
        let e = self.correlations();
        e[0] + e[1] + e[2] - e[3]
    }
}

/// α = 0, α′ = π/2, β = 5π/4, β′ = 3π/4.
pub fn canonical_angles() -> AngleSet {
    AngleSet::new(0.0, FRAC_PI_2, 5.0 * PI / 4.0, 3.0 * PI / 4.0)
}

/// `−cos(θa − θb)`.
pub fn singlet_correlation(theta_a: f64, theta_b: f64) -> f64 {
    -(theta_a - theta_b).cos()
}

/// Outcome probabilities for one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl JointTable {
    pub fn probability(&self, a: Sign, b: Sign) -> f64 {
        match (a, b) {
            (Sign::Plus, Sign::Plus) => self.p_pp,
            (Sign::Plus, Sign::Minus) => self.p_pm,
            (Sign::Minus, Sign::Plus) => self.p_mp,
            (Sign::Minus, Sign::Minus) => self.p_mm,
        }
    }

    pub fn product_mean(&self) -> f64 {
        self.p_pp + self.p_mm - self.p_pm - self.p_mp
    }

    /// Inverse-CDF draw over the cells in order (+,+), (+,−), (−,+), (−,−).
    pub fn sample(&self, u: f64) -> (Sign, Sign) {
        let c1 = self.p_pp;
        let c2 = c1 + self.p_pm;
        let c3 = c2 + self.p_mp;
        if u < c1 {
            (Sign::Plus, Sign::Plus)
        } else if u < c2 {
            (Sign::Plus, Sign::Minus)
        } else if u < c3 {
            (Sign::Minus, Sign::Plus)
        } else {
            (Sign::Minus, Sign::Minus)
        }
    }
}

/// Diagonal `¼(1 − cos θ)`, off-diagonal `¼(1 + cos θ)`.
pub fn joint_outcome_table(theta: f64) -> JointTable {
    let c = theta.cos();
    let same = 0.25 * (1.0 - c);
    let diff = 0.25 * (1.0 + c);
    JointTable {
        p_pp: same,
        p_pm: diff,
        p_mp: diff,
        p_mm: same,
    }
}

/// One outcome pair for settings `(x, y)`, consuming one `next_f64`.
pub fn sample_run(angles: &AngleSet, x: u8, y: u8, rng: &mut BellRng) -> (Sign, Sign) {
    joint_outcome_table(angles.difference(x, y)).sample(rng.next_f64())
}

/// `n` runs with fair random settings (settings stream of `seed`) and
/// singlet outcomes (model stream of `seed`).
pub fn simulate_experiment(angles: &AngleSet, n: usize, seed: RngSeed) -> Result<Vec<ObservedRun>> {
    let settings = sample_settings(n, seed)?;
    let mut rng = BellRng::with_stream(seed, MODEL_STREAM);
    Ok(settings
        .pairs()
        .iter()
        .enumerate()
        .map(|(row_index, p)| {
            let (a_out, b_out) = sample_run(angles, p.x, p.y, &mut rng);
            ObservedRun {
                x: p.x,
                y: p.y,
                a_out,
                b_out,
                row_index,
            }
        })
        .collect())
}
