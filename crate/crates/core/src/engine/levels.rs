use std::cmp::Ordering;

use super::EngineError;

/// Direction of the nested level sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `X_t = {S >= gamma_t}`, thresholds increase.
    #[serde(alias = "super")]
    SuperLevel,
    /// `X_t = {S <= gamma_t}`, thresholds decrease.
    #[serde(alias = "sub")]
    SubLevel,
}

impl Orientation {
    #[inline]
    pub fn admits(self, performance: f64, threshold: f64) -> bool {
        match self {
            Orientation::SuperLevel => performance >= threshold,
            Orientation::SubLevel => performance <= threshold,
        }
    }

    /// The threshold whose level set is empty.
    pub fn sentinel(self) -> f64 {
        match self {
            Orientation::SuperLevel => f64::INFINITY,
            Orientation::SubLevel => f64::NEG_INFINITY,
        }
    }

    /// The threshold whose level set is the whole space.
    pub fn floor(self) -> f64 {
        -self.sentinel()
    }

    /// True when `a` comes strictly before `b` in schedule order.
    #[inline]
    pub fn precedes(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::SuperLevel => a < b,
            Orientation::SubLevel => a > b,
        }
    }

    pub(crate) fn order(self, a: f64, b: f64) -> Ordering {
        match self {
            Orientation::SuperLevel => a.total_cmp(&b),
            Orientation::SubLevel => b.total_cmp(&a),
        }
    }
}

/// Thresholds `gamma_0, ..., gamma_n`, strictly monotone in the orientation's
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSchedule {
    thresholds: Vec<f64>,
    orientation: Orientation,
}

impl LevelSchedule {
    pub fn new(thresholds: Vec<f64>, orientation: Orientation) -> Result<Self, EngineError> {
        if thresholds.is_empty() {
            return Err(EngineError::InvalidSchedule("no thresholds".into()));
        }
        if thresholds.iter().any(|g| g.is_nan()) {
            return Err(EngineError::InvalidSchedule("NaN threshold".into()));
        }
        if let Some(w) = thresholds
            .windows(2)
            .find(|w| !orientation.precedes(w[0], w[1]))
        {
            return Err(EngineError::InvalidSchedule(format!(
                "thresholds {} and {} are not strictly monotone for {orientation:?}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            thresholds,
            orientation,
        })
    }

    /// Sorts by orientation and drops duplicates.
    pub fn from_unsorted(mut values: Vec<f64>, orientation: Orientation) -> Result<Self, EngineError> {
        values.sort_by(|a, b| orientation.order(*a, *b));
        values.dedup();
        Self::new(values, orientation)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.thresholds.last() == Some(&self.orientation.sentinel())
    }

    /// The schedule with the empty-set sentinel appended when missing, so the
    /// final stratum absorbs everything past the last finite threshold.
    pub fn closed(&self) -> LevelSchedule {
        let mut out = self.clone();
        if !self.is_closed() {
            out.thresholds.push(self.orientation.sentinel());
        }
        out
    }

    /// Number of strata of the closed schedule.
    pub fn strata(&self) -> usize {
        self.closed().len() - 1
    }

    /// Merges extra thresholds (e.g. value-at-risk levels) into the schedule.
    pub fn merge(&self, extra: &[f64]) -> Result<LevelSchedule, EngineError> {
        let mut all = self.thresholds.clone();
        all.extend_from_slice(extra);
        Self::from_unsorted(all, self.orientation)
    }
}
