//! Replication summaries: mean, relative error, percent error.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("percent error is undefined for a zero reference value")]
    ZeroTruth,
}

/// Summary of `R` independent replications of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateEstimate {
    pub mean: f64,
    /// `sample_std / (mean * sqrt(R))`. `None` when `R < 2`, `+inf` when the
    /// mean is zero.
    pub re: Option<f64>,
    pub per_run: Vec<f64>,
    pub replications: usize,
}

impl AggregateEstimate {
    pub fn from_runs(per_run: Vec<f64>) -> Self {
        let replications = per_run.len();
        let mean = if replications == 0 {
            f64::NAN
        } else {
            per_run.iter().sum::<f64>() / replications as f64
        };
        let re = if replications < 2 {
            None
        } else {
            let sd = sample_std(&per_run, mean);
            if mean == 0.0 {
                Some(f64::INFINITY)
            } else {
                Some(sd / (mean.abs() * (replications as f64).sqrt()))
            }
        };
        Self {
            mean,
            re,
            per_run,
            replications,
        }
    }

    /// Standard error of the mean, `sample_std / sqrt(R)`.
    pub fn std_error(&self) -> Option<f64> {
        (self.replications >= 2)
            .then(|| sample_std(&self.per_run, self.mean) / (self.replications as f64).sqrt())
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    let n = values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// `100 * (estimate - truth) / truth`.
pub fn percent_error(estimate: f64, truth: f64) -> Result<f64, StatsError> {
    if truth == 0.0 {
        return Err(StatsError::ZeroTruth);
    }
    Ok(100.0 * (estimate - truth) / truth)
}
