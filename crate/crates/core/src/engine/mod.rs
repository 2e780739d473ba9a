//! Stratified splitting over an arbitrary model.
//!
//! The state space is partitioned by a performance function `S` and a
//! schedule `gamma_0, ..., gamma_n` into strata `Z_t = X_{t-1} \ X_t`. Each
//! level keeps `N` particles drawn (approximately) from `f` conditioned on
//! `X_{t-1}`; the particles falling into `Z_t` estimate the stratum mean of
//! the integrand, while the fraction that survives into `X_t` estimates the
//! level entrance probability. Survivors are split back up to `N` particles
//! with a Markov kernel that leaves `f(. | X_t)` invariant.
//!
//! Per stratum:
//!
//! ```text
//! R_t = |Y_t| / |X_t|          (R_0 = 1)
//! P_t = (1 - R_t) * prod_{j<t} R_j
//! H_t = mean of phi over Z_t   (0, flagged, when Z_t is empty)
//! C_t = H_t * P_t
//! ```
//!
//! and the run estimate is `sum_t C_t`.

mod levels;
mod pilot;
mod ssa;

pub use levels::{LevelSchedule, Orientation};
pub use pilot::{next_adaptive_level, pilot_levels, Pilot, MAX_PILOT_LEVELS};
pub use ssa::{
    initial_population, replicate, replicate_runs, replication_seed, run, run_issa, run_ssa,
    split_allocation, stratum_estimates, StratumEstimate, MAX_INDEPENDENT_ATTEMPTS,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::TransitionKernel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no initial particles: the sample size must be at least 1")]
    EmptyInitialSample,
    #[error("cannot allocate offspring: no surviving particles")]
    ZeroSurvivors,
    #[error("invalid level schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("pilot run stalled after {} thresholds", partial.len())]
    Stall { partial: LevelSchedule },
}

/// A model: initial law, performance function and level-conditioned kernels.
///
/// `performance` must be a deterministic function of the state, and
/// `kernel(t, gamma)` must leave `f` conditioned on the level set of `gamma`
/// invariant. `sample_initial` draws from `f` restricted to the level set of
/// `initial_threshold()`, which for most models is the whole space.
pub trait Model: Sync {
    type State: Clone + Send + Sync;
    type Kernel<'a>: TransitionKernel<Self::State>
    where
        Self: 'a;

    fn orientation(&self) -> Orientation;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn performance(&self, state: &Self::State) -> f64;

    /// Kernel used when splitting survivors of level `level`, targeting `f`
    /// conditioned on the level set of `threshold`.
    fn kernel(&self, level: usize, threshold: f64) -> Self::Kernel<'_>;

    fn initial_threshold(&self) -> f64 {
        self.orientation().floor()
    }

    /// The most extreme meaningful level; adaptive level selection stops
    /// once it is reached.
    fn terminal_threshold(&self) -> f64 {
        self.orientation().sentinel()
    }
}

/// A model paired with the integrand `phi` whose mean is estimated.
pub struct ProblemSpec<'a, M: Model> {
    pub model: &'a M,
    pub integrand: &'a (dyn Fn(&M::State) -> f64 + Sync),
}

impl<'a, M: Model> ProblemSpec<'a, M> {
    pub fn new(model: &'a M, integrand: &'a (dyn Fn(&M::State) -> f64 + Sync)) -> Self {
        Self { model, integrand }
    }
}

impl<M: Model> Clone for ProblemSpec<'_, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M: Model> Copy for ProblemSpec<'_, M> {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ssa,
    /// Independent within-level samples, each taken from its own SSA pass.
    Issa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Particles per level (`N`).
    pub samples: usize,
    /// Kernel steps between retained samples (`tau`).
    pub burn_in: usize,
    /// Rarity parameter of the pilot run.
    pub rho: f64,
    pub replications: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Count the adaptive pilot pass as one of the replications.
    pub pool_pilot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            burn_in: 50,
            rho: 0.1,
            replications: 10,
            seed: 0,
            mode: Mode::Ssa,
            pool_pilot: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.samples == 0 {
            return Err(EngineError::EmptyInitialSample);
        }
        if self.burn_in == 0 {
            return Err(EngineError::InvalidConfig("burn-in must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.replications == 0 {
            return Err(EngineError::InvalidConfig("replications must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of regular runs once a pooled pilot is accounted for.
    pub fn regular_runs(&self) -> usize {
        if self.pool_pilot {
            self.replications.saturating_sub(1)
        } else {
            self.replications
        }
    }
}

/// Per-stratum bookkeeping of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRecord {
    /// Stratum index, 1-based.
    pub t: usize,
    /// `gamma_{t-1}`, the level whose set the particles were drawn from.
    pub gamma_from: f64,
    /// `gamma_t`, the level separating `Z_t` from `X_t`.
    pub gamma: f64,
    pub size_x: usize,
    pub size_z: usize,
    pub r_hat: f64,
    pub p_hat: f64,
    pub h_hat: f64,
    pub c_hat: f64,
    /// `Z_t` was empty (or never reached), so `H_t` is a placeholder zero.
    pub degenerate: bool,
}

/// Output of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct SsaRun {
    pub strata: Vec<StratumRecord>,
    /// `sum_t C_t`.
    pub estimate: f64,
    /// `log prod_{j<=t} R_j` for `t = 1..=n`; `-inf` once a level is empty.
    pub log_level_products: Vec<f64>,
    /// First level whose survivor set was empty before the final stratum.
    pub extinct_at: Option<usize>,
}

impl SsaRun {
    pub fn degenerate_flags(&self) -> Vec<bool> {
        self.strata.iter().map(|s| s.degenerate).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.strata.iter().map(|s| s.gamma_from).collect();
        if let Some(last) = self.strata.last() {
            out.push(last.gamma);
        }
        out
    }

    /// `prod_{j=1}^{t} R_j` in linear space (1 for `t = 0`).
    pub fn level_product(&self, t: usize) -> f64 {
        self.strata[..t].iter().map(|s| s.r_hat).product()
    }
}
