//! Closed-form tail bounds for finite-sample CHSH and loophole-adjusted
//! local-realist limits. All probabilities are clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantum maximum of |S|, 2√2.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Number of grid points scanned before golden-section refinement in
/// [`two_term_bound_optimized`].
pub const DELTA_GRID_POINTS: usize = 1024;
/// Relative width at which golden-section refinement stops.
pub const DELTA_REL_TOL: f64 = 1e-9;

pub fn tsirelson_limit() -> f64 {
    TSIRELSON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Theorem1,
    TwoTerm,
    TwoTermOptimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: u64,
    /// Excess of S over 2.
    pub eta: f64,
    /// Upper bound on Pr(S_obs > 2 + eta) for a local table.
    pub probability: f64,
    pub method: BoundMethod,
    /// Split parameter used by the two-term bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn clamp01(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Hoeffding tail `min(1, exp(-2 n t²))` for a binomial or hypergeometric
/// sample mean exceeding its expectation by `t`.
pub fn hoeffding_tail(n: u64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(
            "t",
            format!("must be non-negative, got {t}"),
        ));
    }
    Ok(clamp01((-2.0 * n as f64 * t * t).exp()))
}

fn theorem1_raw(n: u64, eta: f64) -> f64 {
    8.0 * (-(n as f64) * (eta / 16.0).powi(2)).exp()
}

/// `min(1, 8 exp(-n (eta/16)²))`.
pub fn theorem1_bound(n: u64, eta: f64) -> Result<BoundReport> {
    check_n_eta(n, eta)?;
    Ok(BoundReport {
        n,
        eta,
        probability: clamp01(theorem1_raw(n, eta)),
        method: BoundMethod::Theorem1,
        delta: None,
    })
}

fn check_n_eta(n: u64, eta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::ZeroLength { what: "n" });
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid(
            "eta",
            format!("must be non-negative, got {eta}"),
        ));
    }
    Ok(())
}

fn two_term_raw(n: u64, eta: f64, delta: f64) -> f64 {
    let n = n as f64;
    let eps = eta / 8.0;
    4.0 * (-2.0 * n * delta * delta).exp() + 4.0 * (-2.0 * (0.25 - delta) * n * eps * eps).exp()
}

/// `min(1, 4 exp(-2nδ²) + 4 exp(-2(¼−δ) n (eta/8)²))` for `δ ∈ (0, ¼)`.
pub fn two_term_bound(n: u64, eta: f64, delta: f64) -> Result<BoundReport> {
    check_n_eta(n, eta)?;
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1/4), got {delta}"),
        ));
    }
    Ok(BoundReport {
        n,
        eta,
        probability: clamp01(two_term_raw(n, eta, delta)),
        method: BoundMethod::TwoTerm,
        delta: Some(delta),
    })
}

/// The split `8δ² = (eta/8)²` that collapses the two-term bound onto the
/// single-exponential form whenever `δ ≤ 1/8`.
pub fn canonical_delta(eta: f64) -> f64 {
    eta / (16.0 * std::f64::consts::SQRT_2)
}

/// Two-term bound minimised over `δ`.
///
/// Scans `δ_i = i / (4·1024)` for `i = 1..1024`, then refines around the best
/// grid point by golden-section search until the bracket is narrower than
/// `1e-9` relative. The canonical split is also evaluated and the smaller
/// value kept, so the result never exceeds the bound at that split.
pub fn two_term_bound_optimized(n: u64, eta: f64) -> Result<BoundReport> {
    check_n_eta(n, eta)?;
    if eta == 0.0 {
        return Err(Error::invalid("eta", "must be positive"));
    }
    let f = |d: f64| two_term_raw(n, eta, d);
    let step = 0.25 / DELTA_GRID_POINTS as f64;
    let (best_i, _) = (1..DELTA_GRID_POINTS)
        .map(|i| (i, f(i as f64 * step)))
        .fold(
            (1, f64::INFINITY),
            |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
        );

    let (mut lo, mut hi) = ((best_i - 1) as f64 * step, (best_i + 1) as f64 * step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > DELTA_REL_TOL * hi {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mut best = (0.5 * (lo + hi), f(0.5 * (lo + hi)));
    for cand in [best_i as f64 * step, canonical_delta(eta)] {
        if cand > 0.0 && cand < 0.25 {
            let v = f(cand);
            if v < best.1 {
                best = (cand, v);
            }
        }
    }
    Ok(BoundReport {
        n,
        eta,
        probability: clamp01(best.1),
        method: BoundMethod::TwoTermOptimized,
        delta: Some(best.0),
    })
}

/// Smallest `n ≥ 1` whose clamped single-exponential bound is at most `alpha`.
pub fn min_runs_for(eta: f64, alpha: f64) -> Result<u64> {
    if !(eta > 0.0) {
        return Err(Error::invalid(
            "eta",
            format!("must be positive, got {eta}"),
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1], got {alpha}"),
        ));
    }
    let ok = |n: u64| clamp01(theorem1_raw(n, eta)) <= alpha;
    let guess = ((8.0 / alpha).ln() / (eta / 16.0).powi(2)).ceil().max(1.0) as u64;
    let mut n = guess.max(1);
    while !ok(n) {
        n += 1;
    }
    while n > 1 && ok(n - 1) {
        n -= 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loophole {
    Detection,
    Coincidence,
}

impl Loophole {
    /// Coefficient `k` in `δ(γ) = k (1/γ − 1)`.
    pub const fn coefficient(self) -> f64 {
        match self {
            Loophole::Detection => 4.0,
            Loophole::Coincidence => 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBound {
    pub gamma: f64,
    pub delta: f64,
    /// Local-realist limit on S, `2 + delta`.
    pub limit: f64,
    pub loophole: Loophole,
}

pub fn larsson_bound(gamma: f64, loophole: Loophole) -> Result<EfficiencyBound> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(
            "gamma",
            format!("must lie in (0, 1], got {gamma}"),
        ));
    }
    let delta = loophole.coefficient() * (1.0 / gamma - 1.0);
    Ok(EfficiencyBound {
        gamma,
        delta,
        limit: 2.0 + delta,
        loophole,
    })
}

/// Limit `2 + 4(1/γ − 1)` when non-detections are discarded.
pub fn larsson_detection_bound(gamma: f64) -> Result<EfficiencyBound> {
    larsson_bound(gamma, Loophole::Detection)
}

/// Limit `2 + 6(1/γ − 1)` when coincidences are defined by detection times.
pub fn larsson_coincidence_bound(gamma: f64) -> Result<EfficiencyBound> {
    larsson_bound(gamma, Loophole::Coincidence)
}

/// Efficiency at which the loophole-adjusted limit equals 2√2.
pub fn critical_efficiency(loophole: Loophole) -> f64 {
    let k = loophole.coefficient();
    k / (k + TSIRELSON - 2.0)
}
