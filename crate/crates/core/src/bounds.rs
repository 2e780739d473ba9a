//! Sample-size planners for `(epsilon, delta)`-approximation.
//!
//! The per-level plan splits the error budget across the `n` levels: each
//! level ratio gets accuracy `epsilon / 8n` at confidence `delta / 2n^2`, each
//! stratum mean `epsilon / 4` at `delta / 2n`. The constants below are those
//! budgets pushed through a Chernoff bound (ratios) and a Hoeffding bound
//! (stratum means). All counts are rounded up.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid approximation target: {0}")]
    InvalidTarget(String),
    #[error("invalid integrand range [{a}, {b}]: need 0 < a <= b")]
    InvalidRange { a: f64, b: f64 },
    #[error("invalid probability lower bound {0}: need 0 < p <= 1")]
    InvalidProbability(f64),
    #[error("accuracy parameters must lie in (0, 1): epsilon = {epsilon}, delta = {delta}")]
    InvalidAccuracy { epsilon: f64, delta: f64 },
}

/// Accuracy goal plus per-level problem constants.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ApproximationTarget {
    pub epsilon: f64,
    pub delta: f64,
    /// `min(r_t, 1 - r_t)` for each level, in `(0, 1/2]`.
    pub r_lower: Vec<f64>,
    /// Integrand minimum on each stratum, strictly positive.
    pub a: Vec<f64>,
    /// Integrand maximum on each stratum.
    pub b: Vec<f64>,
}

impl ApproximationTarget {
    /// Number of levels.
    pub fn n(&self) -> usize {
        self.r_lower.len()
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        check_accuracy(self.epsilon, self.delta)?;
        let n = self.n();
        if n == 0 {
            return Err(BoundsError::InvalidTarget("at least one level is required".into()));
        }
        if self.a.len() != n || self.b.len() != n {
            return Err(BoundsError::InvalidTarget(format!(
                "{n} levels but {} lower and {} upper integrand bounds",
                self.a.len(),
                self.b.len()
            )));
        }
        if let Some(r) = self.r_lower.iter().find(|r| !(**r > 0.0 && **r <= 0.5)) {
            return Err(BoundsError::InvalidTarget(format!(
                "level ratio bound {r} outside (0, 0.5]"
            )));
        }
        for (&a, &b) in self.a.iter().zip(&self.b) {
            check_range(a, b)?;
        }
        Ok(())
    }
}

fn check_accuracy(epsilon: f64, delta: f64) -> Result<(), BoundsError> {
    let open_unit = |v: f64| v > 0.0 && v < 1.0;
    if open_unit(epsilon) && open_unit(delta) {
        Ok(())
    } else {
        Err(BoundsError::InvalidAccuracy { epsilon, delta })
    }
}

fn check_range(a: f64, b: f64) -> Result<(), BoundsError> {
    if a > 0.0 && b >= a && b.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::InvalidRange { a, b })
    }
}

fn ceil_count(x: f64) -> u64 {
    x.ceil() as u64
}

/// Requirements for one level of the independent variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelPlan {
    pub t: usize,
    /// Total-variation budget for the samples populating `X_t`.
    pub tv_x: f64,
    pub min_x: u64,
    /// Total-variation budget for the samples falling in `Z_t`; infinite
    /// for a constant integrand.
    pub tv_z: f64,
    pub min_z: u64,
}

/// `3072 n^2 ln(4n^2/delta) / (epsilon^2 r^2)` before rounding.
pub fn min_x_real(n: usize, r_lower: f64, epsilon: f64, delta: f64) -> f64 {
    let n = n as f64;
    3072.0 * n * n * (4.0 * n * n / delta).ln() / (epsilon * epsilon * r_lower * r_lower)
}

/// `128 (b-a)^2 ln(4n/delta) / (epsilon^2 a^2)` before rounding.
pub fn min_z_real(n: usize, a: f64, b: f64, epsilon: f64, delta: f64) -> f64 {
    let n = n as f64;
    128.0 * (b - a).powi(2) * (4.0 * n / delta).ln() / (epsilon * epsilon * a * a)
}

/// Per-level total-variation budgets and minimum sample sizes.
pub fn epsdelta_samplesizes(target: &ApproximationTarget) -> Result<Vec<LevelPlan>, BoundsError> {
    target.validate()?;
    let n = target.n();
    let (eps, delta) = (target.epsilon, target.delta);
    Ok((0..n)
        .map(|i| {
            let (r, a, b) = (target.r_lower[i], target.a[i], target.b[i]);
            LevelPlan {
                t: i + 1,
                tv_x: eps * r / (32.0 * n as f64),
                min_x: ceil_count(min_x_real(n, r, eps, delta)),
                tv_z: if b == a {
                    f64::INFINITY
                } else {
                    eps * a / (16.0 * (b - a))
                },
                min_z: ceil_count(min_z_real(n, a, b, eps, delta)),
            }
        })
        .collect())
}

/// `(b-a)^2 ln(2/delta) / (2 (epsilon/4)^2 a^2)` before rounding.
pub fn hoeffding_real(a: f64, b: f64, epsilon: f64, delta: f64) -> f64 {
    let e = epsilon / 4.0;
    (b - a).powi(2) * (2.0 / delta).ln() / (2.0 * e * e * a * a)
}

/// Samples needed for a relative `(epsilon, delta)` estimate of the mean of a
/// variable supported on `[a, b]`, `a > 0`, by Hoeffding's inequality.
pub fn hoeffding_m(a: f64, b: f64, epsilon: f64, delta: f64) -> Result<u64, BoundsError> {
    check_range(a, b)?;
    check_accuracy(epsilon, delta)?;
    Ok(ceil_count(hoeffding_real(a, b, epsilon, delta)))
}

/// Total-variation budget accompanying [`hoeffding_m`].
pub fn hoeffding_tv(a: f64, b: f64, epsilon: f64) -> f64 {
    if b == a {
        f64::INFINITY
    } else {
        epsilon * a / (4.0 * (b - a))
    }
}

/// `3 ln(2/delta) / ((epsilon/4)^2 p^2)` before rounding.
pub fn chernoff_real(p_lower: f64, epsilon: f64, delta: f64) -> f64 {
    let e = epsilon / 4.0;
    3.0 * (2.0 / delta).ln() / (e * e * p_lower * p_lower)
}

/// Samples needed for a relative `(epsilon, delta)` estimate of a Bernoulli
/// mean known to be at least `p_lower`, by a Chernoff bound.
pub fn chernoff_m(p_lower: f64, epsilon: f64, delta: f64) -> Result<u64, BoundsError> {
    if !(p_lower > 0.0 && p_lower <= 1.0) {
        return Err(BoundsError::InvalidProbability(p_lower));
    }
    check_accuracy(epsilon, delta)?;
    Ok(ceil_count(chernoff_real(p_lower, epsilon, delta)))
}

/// Total-variation budget accompanying [`chernoff_m`].
pub fn chernoff_tv(p_lower: f64, epsilon: f64) -> f64 {
    epsilon * p_lower / 4.0
}
