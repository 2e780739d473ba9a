//! Markov transition kernels that leave a level-conditioned density invariant.
//!
//! Two concrete families are provided:
//!
//! * [`BitFlipKernel`]: lazy single-coordinate flip chain on the knapsack set
//!   `{x in {0,1}^k : w.x <= b}`. Proposals are symmetric, so the uniform law
//!   on the set is stationary.
//! * [`HitAndRunKernel`]: Hit-and-Run for a standard Gaussian restricted to a
//!   performance level set. Along a uniformly random line the restricted
//!   Gaussian is a univariate normal truncated to the admissible part of the
//!   line, which is sampled by rejection.
//!
//! Kernels are stateless; all randomness comes from the caller's stream.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::engine::Orientation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("state violates the knapsack constraint: weight {weight} > capacity {capacity}")]
    InfeasibleState { weight: f64, capacity: f64 },
    #[error("weights and state have different lengths ({weights} vs {state})")]
    DimensionMismatch { weights: usize, state: usize },
}

/// One transition of a Markov chain on states of type `S`.
pub trait TransitionKernel<S>: Sync {
    fn step<R: Rng + ?Sized>(&self, state: &S, rng: &mut R) -> S;
}

/// Applies `kernel` `tau` times.
pub fn tau_step<S, K, R>(kernel: &K, x: &S, tau: usize, rng: &mut R) -> S
where
    S: Clone,
    K: TransitionKernel<S> + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = x.clone();
    for _ in 0..tau {
        state = kernel.step(&state, rng);
    }
    state
}

/// The kernel that never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl<S: Clone> TransitionKernel<S> for Identity {
    fn step<R: Rng + ?Sized>(&self, state: &S, _rng: &mut R) -> S {
        state.clone()
    }
}

/// `w . x` summed in index order. Models and kernels share this so that level
/// membership is decided identically everywhere.
pub fn weighted_sum(weights: &[f64], x: &[bool]) -> f64 {
    weights
        .iter()
        .zip(x)
        .filter(|(_, &bit)| bit)
        .map(|(w, _)| *w)
        .sum()
}

/// Flips coordinate `i` if the result stays within `capacity`, otherwise
/// returns `x` unchanged.
pub fn bitflip_propose(x: &[bool], weights: &[f64], capacity: f64, i: usize) -> Vec<bool> {
    let mut y = x.to_vec();
    y[i] = !y[i];
    if weighted_sum(weights, &y) <= capacity {
        y
    } else {
        x.to_vec()
    }
}

/// One step of the lazy single-flip chain: hold with probability 1/2,
/// otherwise propose a uniformly chosen coordinate flip.
pub fn bitflip_step<R: Rng + ?Sized>(
    x: &[bool],
    weights: &[f64],
    capacity: f64,
    rng: &mut R,
) -> Result<Vec<bool>, KernelError> {
    if x.len() != weights.len() {
        return Err(KernelError::DimensionMismatch {
            weights: weights.len(),
            state: x.len(),
        });
    }
    let weight = weighted_sum(weights, x);
    if weight > capacity {
        return Err(KernelError::InfeasibleState { weight, capacity });
    }
    Ok(lazy_flip(x, weights, capacity, rng))
}

fn lazy_flip<R: Rng + ?Sized>(x: &[bool], weights: &[f64], capacity: f64, rng: &mut R) -> Vec<bool> {
    if x.is_empty() || rng.random_bool(0.5) {
        return x.to_vec();
    }
    let i = rng.random_range(0..x.len());
    bitflip_propose(x, weights, capacity, i)
}

/// Single-flip chain targeting the uniform law on `{x : w.x <= capacity}`.
#[derive(Debug, Clone)]
pub struct BitFlipKernel<'a> {
    weights: &'a [f64],
    capacity: f64,
}

impl<'a> BitFlipKernel<'a> {
    pub fn new(weights: &'a [f64], capacity: f64) -> Self {
        Self { weights, capacity }
    }
}

impl TransitionKernel<Vec<bool>> for BitFlipKernel<'_> {
    fn step<R: Rng + ?Sized>(&self, state: &Vec<bool>, rng: &mut R) -> Vec<bool> {
        debug_assert!(weighted_sum(self.weights, state) <= self.capacity);
        lazy_flip(state, self.weights, self.capacity, rng)
    }
}

/// A real-valued performance over a latent Gaussian vector.
pub trait LatentPerformance: Sync {
    fn performance(&self, x: &[f64]) -> f64;

    /// The map `lambda -> performance(x + lambda * d)`. Implementors may
    /// override this with a precomputed form; the default rebuilds the point.
    fn along_line<'a>(&'a self, x: &'a [f64], d: &'a [f64]) -> Box<dyn Fn(f64) -> f64 + 'a> {
        Box::new(move |lambda| {
            let y: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + lambda * di).collect();
            self.performance(&y)
        })
    }
}

impl<F> LatentPerformance for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn performance(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The set `{x : S(x) >= threshold}` (super-level) or `{x : S(x) <= threshold}`
/// (sub-level) under a standard Gaussian reference law.
pub struct GaussianLevelConstraint<'a, P: ?Sized> {
    pub threshold: f64,
    pub orientation: Orientation,
    pub performance: &'a P,
}

impl<P: LatentPerformance + ?Sized> GaussianLevelConstraint<'_, P> {
    pub fn admits(&self, x: &[f64]) -> bool {
        self.orientation
            .admits(self.performance.performance(x), self.threshold)
    }
}

/// Rejection cap for the truncated line draw.
pub const HIT_AND_RUN_MAX_PROPOSALS: usize = 100;

/// Uniform unit vector in `dim` dimensions.
pub fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut d: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            d.iter_mut().for_each(|v| *v /= norm);
            return d;
        }
    }
}

/// Samples `lambda` from the standard Gaussian's line conditional along
/// `x + lambda d` (normal with mean `-x.d`, unit variance) restricted to the
/// constraint. Returns `None` once the rejection cap is exhausted.
pub fn line_draw<P, R>(
    x: &[f64],
    d: &[f64],
    constraint: &GaussianLevelConstraint<'_, P>,
    rng: &mut R,
) -> Option<f64>
where
    P: LatentPerformance + ?Sized,
    R: Rng + ?Sized,
{
    let centre = -x.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    let along = constraint.performance.along_line(x, d);
    for _ in 0..HIT_AND_RUN_MAX_PROPOSALS {
        let z: f64 = rng.sample(StandardNormal);
        let lambda = centre + z;
        if constraint.orientation.admits(along(lambda), constraint.threshold) {
            return Some(lambda);
        }
    }
    None
}

/// One Hit-and-Run transition. `x` must satisfy the constraint; the result
/// always does (the chain stays put when the line draw is exhausted).
pub fn hit_and_run_step<P, R>(x: &[f64], constraint: &GaussianLevelConstraint<'_, P>, rng: &mut R) -> Vec<f64>
where
    P: LatentPerformance + ?Sized,
    R: Rng + ?Sized,
{
    let d = random_direction(x.len(), rng);
    if let Some(lambda) = line_draw(x, &d, constraint, rng) {
        let y: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + lambda * di).collect();
        // A precomputed line map can disagree with the direct evaluation in
        // the last bit; membership is always decided by the direct form.
        if constraint.admits(&y) {
            return y;
        }
    }
    x.to_vec()
}

pub struct HitAndRunKernel<'a, P: ?Sized> {
    pub constraint: GaussianLevelConstraint<'a, P>,
}

impl<P: LatentPerformance + ?Sized> TransitionKernel<Vec<f64>> for HitAndRunKernel<'_, P> {
    fn step<R: Rng + ?Sized>(&self, state: &Vec<f64>, rng: &mut R) -> Vec<f64> {
        hit_and_run_step(state, &self.constraint, rng)
    }
}
