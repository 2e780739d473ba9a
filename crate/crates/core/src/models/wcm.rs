//! Weighted component model: `X` uniform on `{0,1}^k`, performance
//! `S(x) = w.x`.
//!
//! The tail probability `P(S <= gamma)` is estimated with the sub-level
//! schedule `gamma_t = gamma + (n - t) w_min`, `n = floor((total - gamma) /
//! w_min)`. Every level set is a knapsack solution set and consecutive sets
//! differ by at most a factor `k + 1`, so each ratio is bounded away from
//! zero. `gamma_0` exceeds `total - w_min`, so only the all-ones state can lie
//! outside `X_0`; its mass is handled exactly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{hoeffding_m, BoundsError};
use crate::engine::{
    replicate_runs, replication_seed, EngineError, LevelSchedule, Model, Orientation, ProblemSpec,
    RunConfig, SsaRun,
};
use crate::kernels::{tau_step, weighted_sum, BitFlipKernel};
use crate::rng::{stream, tag};
use crate::stats::AggregateEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WcmError {
    #[error("weight vector is empty")]
    EmptyWeights,
    #[error("weight {index} is {value}; weights must be positive and finite")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("threshold must be finite, got {0}")]
    NonFiniteGamma(f64),
    #[error("threshold {gamma} exceeds the total weight {total}: no levels to place")]
    NonPositiveLevels { gamma: f64, total: f64 },
    #[error("level set {{S <= {0}}} is empty")]
    EmptyLevelSet(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct WcmInstance {
    weights: Vec<f64>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    weights: Vec<f64>,
    gamma: f64,
}

impl TryFrom<RawInstance> for WcmInstance {
    type Error = WcmError;

    fn try_from(raw: RawInstance) -> Result<Self, WcmError> {
        WcmInstance::new(raw.weights, raw.gamma)
    }
}

impl From<WcmInstance> for RawInstance {
    fn from(inst: WcmInstance) -> Self {
        RawInstance {
            weights: inst.weights,
            gamma: inst.gamma,
        }
    }
}

impl WcmInstance {
    pub fn new(weights: Vec<f64>, gamma: f64) -> Result<Self, WcmError> {
        if weights.is_empty() {
            return Err(WcmError::EmptyWeights);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
        {
            return Err(WcmError::NonPositiveWeight { index, value });
        }
        if !gamma.is_finite() {
            return Err(WcmError::NonFiniteGamma(gamma));
        }
        Ok(Self { weights, gamma })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn w_min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn w_max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        weighted_sum(&self.weights, &vec![true; self.k()])
    }

    pub fn performance(&self, x: &[bool]) -> f64 {
        weighted_sum(&self.weights, x)
    }

    /// Number of levels `n` of the schedule.
    pub fn level_count(&self) -> Result<usize, WcmError> {
        let total = self.total();
        if self.gamma > total {
            return Err(WcmError::NonPositiveLevels {
                gamma: self.gamma,
                total,
            });
        }
        Ok(((total - self.gamma) / self.w_min()).floor() as usize)
    }
}

/// `gamma_t = gamma + (n - t) w_min` for `t = 0..=n`, sub-level orientation.
pub fn wcm_levels(inst: &WcmInstance) -> Result<LevelSchedule, WcmError> {
    let n = inst.level_count()?;
    let w_min = inst.w_min();
    let thresholds = (0..=n)
        .map(|t| inst.gamma + (n - t) as f64 * w_min)
        .collect();
    Ok(LevelSchedule::new(thresholds, Orientation::SubLevel)?)
}

/// Guaranteed lower bound on `|X_{b - w_min}| / |X_b|` for `k` components.
pub fn wcm_r_lower_bound(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

/// Engine model for the tail problem: uniform law on `X_{gamma_0}`.
#[derive(Debug, Clone)]
pub struct WcmModel<'a> {
    inst: &'a WcmInstance,
    gamma_0: f64,
}

impl<'a> WcmModel<'a> {
    pub fn new(inst: &'a WcmInstance) -> Result<Self, WcmError> {
        let schedule = wcm_levels(inst)?;
        Ok(Self {
            inst,
            gamma_0: schedule.thresholds()[0],
        })
    }

    /// Probability mass of `{0,1}^k` outside `X_{gamma_0}`: `2^-k` when the
    /// all-ones state exceeds `gamma_0`, else zero.
    pub fn excluded_mass(&self) -> f64 {
        if self.inst.total() > self.gamma_0 {
            0.5f64.powi(self.inst.k() as i32)
        } else {
            0.0
        }
    }

    /// `P(S <= gamma)` from an estimate of `P(S <= gamma | X_{gamma_0})`.
    pub fn unconditional_tail(&self, conditional: f64) -> f64 {
        let m = self.excluded_mass();
        let all_ones_qualifies = if self.inst.total() <= self.inst.gamma { 1.0 } else { 0.0 };
        conditional * (1.0 - m) + all_ones_qualifies * m
    }
}

impl Model for WcmModel<'_> {
    type State = Vec<bool>;
    type Kernel<'k>
        = BitFlipKernel<'k>
    where
        Self: 'k;

    fn orientation(&self) -> Orientation {
        Orientation::SubLevel
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        loop {
            let x: Vec<bool> = (0..self.inst.k()).map(|_| rng.random_bool(0.5)).collect();
            if self.inst.performance(&x) <= self.gamma_0 {
                return x;
            }
        }
    }

    fn performance(&self, state: &Vec<bool>) -> f64 {
        self.inst.performance(state)
    }

    fn kernel(&self, _level: usize, threshold: f64) -> BitFlipKernel<'_> {
        BitFlipKernel::new(&self.inst.weights, threshold)
    }

    fn initial_threshold(&self) -> f64 {
        self.gamma_0
    }

    fn terminal_threshold(&self) -> f64 {
        self.inst.gamma
    }
}

/// Raw engine runs for the tail problem, replications `0..count`. Each
/// run's estimate is `P(S <= gamma | X_{gamma_0})`; see [`tail_from_run`].
pub fn wcm_runs(inst: &WcmInstance, config: &RunConfig, count: usize) -> Result<Vec<SsaRun>, WcmError> {
    let model = WcmModel::new(inst)?;
    let gamma = inst.gamma;
    let phi = move |x: &Vec<bool>| if inst.performance(x) <= gamma { 1.0 } else { 0.0 };
    let spec = ProblemSpec::new(&model, &phi);
    Ok(replicate_runs(&spec, &wcm_levels(inst)?, config, 0, count)?)
}

/// `P(S <= gamma)` from one run.
pub fn tail_from_run(inst: &WcmInstance, run: &SsaRun) -> Result<f64, WcmError> {
    Ok(WcmModel::new(inst)?.unconditional_tail(run.estimate))
}

/// Per-run tail estimates `P(S <= gamma)`, replications `0..count`.
pub fn wcm_tail_runs(inst: &WcmInstance, config: &RunConfig, count: usize) -> Result<Vec<f64>, WcmError> {
    wcm_runs(inst, config, count)?
        .iter()
        .map(|r| tail_from_run(inst, r))
        .collect()
}

/// `P(S <= gamma)` over `config.replications` runs.
pub fn wcm_tail(inst: &WcmInstance, config: &RunConfig) -> Result<AggregateEstimate, WcmError> {
    config.validate()?;
    Ok(AggregateEstimate::from_runs(wcm_tail_runs(
        inst,
        config,
        config.replications,
    )?))
}

/// Sample count for the conditional expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CondExpSamples {
    /// `config.samples` chain samples per replication.
    #[default]
    FromConfig,
    /// Enough samples for a relative `(epsilon, delta)` estimate of a
    /// variable supported on `[w_min, w_max]`.
    Accuracy { epsilon: f64, delta: f64 },
}

/// Chain steps discarded before the first retained sample, as a multiple of
/// `tau * k`.
pub const CONDEXP_BURN_IN_SWEEPS: usize = 10;

/// `E[S | S <= gamma]`: the mean of `S` along the lazy single-flip chain on
/// `X_gamma`, started from the empty set, sampled every `tau` steps after
/// `10 tau k` steps of burn-in.
pub fn wcm_condexp(
    inst: &WcmInstance,
    config: &RunConfig,
    samples: CondExpSamples,
) -> Result<AggregateEstimate, WcmError> {
    config.validate()?;
    if inst.gamma < 0.0 {
        return Err(WcmError::EmptyLevelSet(inst.gamma));
    }
    let m = match samples {
        CondExpSamples::FromConfig => config.samples,
        CondExpSamples::Accuracy { epsilon, delta } => {
            hoeffding_m(inst.w_min(), inst.w_max(), epsilon, delta)?.max(1) as usize
        }
    };
    let k = inst.k();
    let tau = config.burn_in;
    let kernel = BitFlipKernel::new(&inst.weights, inst.gamma);
    let per_run: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(replication_seed(config.seed, j), &[tag::CHAIN]);
            let mut x = tau_step(&kernel, &vec![false; k], CONDEXP_BURN_IN_SWEEPS * tau * k, &mut rng);
            let mut sum = 0.0;
            for _ in 0..m {
                x = tau_step(&kernel, &x, tau, &mut rng);
                sum += inst.performance(&x);
            }
            sum / m as f64
        })
        .collect();
    Ok(AggregateEstimate::from_runs(per_run))
}
