//! Self-avoiding walks on the square lattice.
//!
//! `X` is a uniform direction sequence in `{L, R, U, D}^n` and `S(x)` the
//! length of its longest self-avoiding prefix, so `X_t` (levels `t = 0..n`)
//! is the set of sequences whose first `t` steps avoid themselves. Given
//! membership in `X_t`, the remaining directions are still i.i.d. uniform:
//! splitting keeps a survivor's first `t` steps and redraws the rest, which is
//! an exact draw from the next conditional law. Only the directions needed to
//! decide the current level are ever materialised.
//!
//! The number of walks is `c_n = 4^n P(S >= n)`, reported as a count.

use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    replicate_runs, EngineError, LevelSchedule, Model, Orientation, ProblemSpec, RunConfig, SsaRun,
};
use crate::kernels::TransitionKernel;
use crate::stats::AggregateEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SawError {
    #[error("walk length must be at least 1")]
    ZeroLength,
    #[error("growth-constant estimate needs a positive count, got {0}")]
    NonPositive(f64),
    #[error("relative-error target {0} must be positive")]
    InvalidTarget(f64),
    #[error("every replication went extinct before length {0}")]
    Extinction(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..4)]
    }
}

/// Realised prefix of a direction sequence; later directions are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Walk {
    pub directions: Vec<Direction>,
}

impl Walk {
    pub fn new(directions: Vec<Direction>) -> Self {
        Self { directions }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Lattice position after the first `steps` realised steps.
    pub fn position(&self, steps: usize) -> (i32, i32) {
        self.directions[..steps].iter().fold((0, 0), |(x, y), d| {
            let (dx, dy) = d.delta();
            (x + dx, y + dy)
        })
    }

    /// Euclidean distance of the realised endpoint from the origin.
    pub fn end_distance(&self) -> f64 {
        let (x, y) = self.position(self.len());
        f64::from(x).hypot(f64::from(y))
    }
}

/// Largest `t <= n` such that the first `t` realised steps visit `t + 1`
/// distinct points.
pub fn saw_prefix_length(walk: &Walk, n: usize) -> usize {
    let mut visited = HashSet::with_capacity(walk.len() + 1);
    let mut at = (0i32, 0i32);
    visited.insert(at);
    for (t, d) in walk.directions.iter().take(n).enumerate() {
        let (dx, dy) = d.delta();
        at = (at.0 + dx, at.1 + dy);
        if !visited.insert(at) {
            return t;
        }
    }
    walk.len().min(n)
}

/// Levels `0, 1, ..., n` (closed by the engine with `+inf`).
pub fn saw_levels(n: usize) -> Result<LevelSchedule, SawError> {
    if n == 0 {
        return Err(SawError::ZeroLength);
    }
    Ok(LevelSchedule::new(
        (0..=n).map(|t| t as f64).collect(),
        Orientation::SuperLevel,
    )?)
}

#[derive(Debug, Clone, Copy)]
pub struct SawModel {
    n: usize,
}

impl SawModel {
    pub fn new(n: usize) -> Result<Self, SawError> {
        if n == 0 {
            return Err(SawError::ZeroLength);
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Keeps the first `keep` steps and draws the next one afresh (unless the
/// walk is already complete).
#[derive(Debug, Clone, Copy)]
pub struct ExtendKernel {
    keep: usize,
    n: usize,
}

impl TransitionKernel<Walk> for ExtendKernel {
    fn step<R: Rng + ?Sized>(&self, state: &Walk, rng: &mut R) -> Walk {
        let mut directions = state.directions[..self.keep.min(state.len())].to_vec();
        if directions.len() < self.n {
            directions.push(Direction::random(rng));
        }
        Walk { directions }
    }
}

impl Model for SawModel {
    type State = Walk;
    type Kernel<'a> = ExtendKernel;

    fn orientation(&self) -> Orientation {
        Orientation::SuperLevel
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Walk {
        Walk::new(vec![Direction::random(rng)])
    }

    fn performance(&self, state: &Walk) -> f64 {
        saw_prefix_length(state, self.n) as f64
    }

    fn kernel(&self, _level: usize, threshold: f64) -> ExtendKernel {
        ExtendKernel {
            keep: threshold as usize,
            n: self.n,
        }
    }

    fn initial_threshold(&self) -> f64 {
        0.0
    }

    fn terminal_threshold(&self) -> f64 {
        self.n as f64
    }
}

/// Count estimate `4^n prod R_t` of one run, via log space.
pub fn run_count(run: &SsaRun, n: usize) -> f64 {
    let log_prod = run.log_level_products[n - 1];
    (n as f64 * 4f64.ln() + log_prod).exp()
}

/// Mean endpoint distance of one run (the final stratum's `H`), `None` on
/// extinction.
pub fn run_delta(run: &SsaRun, n: usize) -> Option<f64> {
    let last = &run.strata[n];
    (last.size_z > 0).then_some(last.h_hat)
}

/// Replications `first..first + count` of the walk estimator.
pub fn saw_runs(n: usize, config: &RunConfig, first: usize, count: usize) -> Result<Vec<SsaRun>, SawError> {
    let model = SawModel::new(n)?;
    let phi = |w: &Walk| w.end_distance();
    let spec = ProblemSpec::new(&model, &phi);
    Ok(replicate_runs(&spec, &saw_levels(n)?, config, first, count)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SawEstimate {
    pub n: usize,
    pub count: AggregateEstimate,
    /// `None` when every run went extinct.
    pub delta: Option<AggregateEstimate>,
    pub extinct_runs: usize,
}

impl SawEstimate {
    pub fn from_runs(n: usize, runs: &[SsaRun]) -> Self {
        let deltas: Vec<f64> = runs.iter().filter_map(|r| run_delta(r, n)).collect();
        Self {
            n,
            count: AggregateEstimate::from_runs(runs.iter().map(|r| run_count(r, n)).collect()),
            extinct_runs: runs.len() - deltas.len(),
            delta: (!deltas.is_empty()).then(|| AggregateEstimate::from_runs(deltas)),
        }
    }
}

/// `c_n` and `Delta_n` from `config.replications` runs.
pub fn estimate_saw(n: usize, config: &RunConfig) -> Result<SawEstimate, SawError> {
    config.validate()?;
    let runs = saw_runs(n, config, 0, config.replications)?;
    Ok(SawEstimate::from_runs(n, &runs))
}

/// `c_n` alone.
pub fn estimate_cn(n: usize, config: &RunConfig) -> Result<AggregateEstimate, SawError> {
    Ok(estimate_saw(n, config)?.count)
}

/// `Delta_n` alone.
pub fn estimate_delta(n: usize, config: &RunConfig) -> Result<AggregateEstimate, SawError> {
    estimate_saw(n, config)?
        .delta
        .ok_or(SawError::Extinction(n))
}

/// Adds batches of `config.replications` runs until the relative error of
/// `c_n` is at most `re_target` or `max_replications` is reached. Replication
/// `j` always uses the same seed, so the result does not depend on batching.
pub fn saw_runs_until(
    n: usize,
    config: &RunConfig,
    re_target: f64,
    max_replications: usize,
) -> Result<Vec<SsaRun>, SawError> {
    config.validate()?;
    if !(re_target > 0.0) {
        return Err(SawError::InvalidTarget(re_target));
    }
    let batch = config.replications.max(2);
    let mut runs = Vec::new();
    loop {
        let count = batch.min(max_replications.saturating_sub(runs.len())).max(1);
        runs.extend(saw_runs(n, config, runs.len(), count)?);
        let est = SawEstimate::from_runs(n, &runs);
        let done = est.count.re.is_some_and(|re| re <= re_target);
        if done || runs.len() >= max_replications {
            return Ok(runs);
        }
    }
}

/// [`saw_runs_until`] summarised.
pub fn estimate_saw_until(
    n: usize,
    config: &RunConfig,
    re_target: f64,
    max_replications: usize,
) -> Result<SawEstimate, SawError> {
    let runs = saw_runs_until(n, config, re_target, max_replications)?;
    Ok(SawEstimate::from_runs(n, &runs))
}

/// `c^(1/n)`, the growth-constant estimate.
pub fn mu_estimate(c_hat: f64, n: usize) -> Result<f64, SawError> {
    if !(c_hat > 0.0) {
        return Err(SawError::NonPositive(c_hat));
    }
    if n == 0 {
        return Err(SawError::ZeroLength);
    }
    Ok((c_hat.ln() / n as f64).exp())
}
