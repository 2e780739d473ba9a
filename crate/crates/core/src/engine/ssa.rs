use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::{EngineError, LevelSchedule, Mode, Model, ProblemSpec, RunConfig, SsaRun, StratumRecord};
use crate::kernels::tau_step;
use crate::rng::{derive_seed, stream, tag};
use crate::stats::AggregateEstimate;

/// Cap on fresh passes tried per independent particle before the level is
/// treated as unreachable.
pub const MAX_INDEPENDENT_ATTEMPTS: usize = 1000;

/// Offspring counts for `size_y` survivors: `floor(N / size_y)` each, plus one
/// for a uniformly chosen subset of size `N mod size_y`.
pub fn split_allocation<R: Rng + ?Sized>(
    size_y: usize,
    total: usize,
    rng: &mut R,
) -> Result<Vec<usize>, EngineError> {
    if size_y == 0 {
        return Err(EngineError::ZeroSurvivors);
    }
    let mut counts = vec![total / size_y; size_y];
    for i in index::sample(rng, size_y, total % size_y) {
        counts[i] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumEstimate {
    pub h_hat: f64,
    pub p_hat: f64,
    pub c_hat: f64,
    /// No integrand values were observed; `h_hat` is the placeholder zero.
    pub empty: bool,
}

/// Estimates for stratum `t` given the integrand values over `Z_t` and the
/// ratios `R_0 = 1, R_1, ..., R_t`.
pub fn stratum_estimates(phi_values: &[f64], r_hats: &[f64], t: usize) -> StratumEstimate {
    debug_assert!(r_hats.len() > t);
    let (h_hat, empty) = mean_or_flag(phi_values);
    let prefix: f64 = r_hats[..t].iter().product();
    let p_hat = (1.0 - r_hats[t]) * prefix;
    StratumEstimate {
        h_hat,
        p_hat,
        c_hat: h_hat * p_hat,
        empty,
    }
}

fn mean_or_flag(values: &[f64]) -> (f64, bool) {
    if values.is_empty() {
        (0.0, true)
    } else {
        (values.iter().sum::<f64>() / values.len() as f64, false)
    }
}

/// `count` exact draws from the model's initial law, one stream per particle.
pub fn initial_population<M: Model>(model: &M, count: usize, seed: u64) -> Vec<M::State> {
    (0..count)
        .into_par_iter()
        .map(|i| model.sample_initial(&mut stream(seed, &[tag::INITIAL, i as u64])))
        .collect()
}

/// Running per-stratum accounting shared by the SSA, ISSA and pilot passes.
pub(super) struct Ledger {
    strata: Vec<StratumRecord>,
    log_products: Vec<f64>,
    log_prod: f64,
    extinct_at: Option<usize>,
}

impl Ledger {
    pub(super) fn new() -> Self {
        Self {
            strata: Vec::new(),
            log_products: Vec::new(),
            log_prod: 0.0,
            extinct_at: None,
        }
    }

    /// Splits `particles` at `gamma`, records stratum `t` and returns the
    /// survivors.
    pub(super) fn stratify<M: Model>(
        &mut self,
        spec: &ProblemSpec<'_, M>,
        t: usize,
        gamma_from: f64,
        gamma: f64,
        particles: Vec<M::State>,
    ) -> Vec<M::State> {
        let orientation = spec.model.orientation();
        let size_x = particles.len();
        let flags: Vec<(bool, f64)> = particles
            .par_iter()
            .map(|s| {
                if orientation.admits(spec.model.performance(s), gamma) {
                    (true, 0.0)
                } else {
                    (false, (spec.integrand)(s))
                }
            })
            .collect();
        let phi: Vec<f64> = flags.iter().filter(|f| !f.0).map(|f| f.1).collect();
        let survivors: Vec<M::State> = particles
            .into_iter()
            .zip(&flags)
            .filter(|(_, f)| f.0)
            .map(|(s, _)| s)
            .collect();
        let size_z = phi.len();
        let r_hat = if size_x == 0 {
            0.0
        } else {
            survivors.len() as f64 / size_x as f64
        };
        let (h_hat, empty) = mean_or_flag(&phi);
        self.push(t, gamma_from, gamma, size_x, size_z, r_hat, h_hat, empty);
        survivors
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: usize,
        gamma_from: f64,
        gamma: f64,
        size_x: usize,
        size_z: usize,
        r_hat: f64,
        h_hat: f64,
        degenerate: bool,
    ) {
        let p_hat = (1.0 - r_hat) * self.log_prod.exp();
        self.strata.push(StratumRecord {
            t,
            gamma_from,
            gamma,
            size_x,
            size_z,
            r_hat,
            p_hat,
            h_hat,
            c_hat: h_hat * p_hat,
            degenerate,
        });
        self.log_prod += r_hat.ln();
        self.log_products.push(self.log_prod);
    }

    /// Records stratum `t` as reached by no particle at all.
    pub(super) fn unreachable(&mut self, t: usize, gamma_from: f64, gamma: f64) {
        self.push(t, gamma_from, gamma, 0, 0, 0.0, 0.0, true);
        self.extinct_at.get_or_insert(t);
    }

    pub(super) fn mark_extinct(&mut self, t: usize) {
        self.extinct_at.get_or_insert(t);
    }

    /// Fills strata never reached with zeros and sums the estimate.
    pub(super) fn finish(mut self, thresholds: &[f64]) -> SsaRun {
        let n = thresholds.len() - 1;
        for t in self.strata.len() + 1..=n {
            self.push(t, thresholds[t - 1], thresholds[t], 0, 0, 0.0, 0.0, true);
        }
        let estimate = self.strata.iter().map(|s| s.c_hat).sum();
        SsaRun {
            strata: self.strata,
            estimate,
            log_level_products: self.log_products,
            extinct_at: self.extinct_at,
        }
    }
}

/// Replicates survivors of level `t` back to `total` particles with the
/// level-`t` kernel. Each survivor's offspring chain has its own stream.
pub(super) fn split<M: Model>(
    model: &M,
    survivors: &[M::State],
    t: usize,
    gamma: f64,
    total: usize,
    tau: usize,
    seed: u64,
) -> Result<Vec<M::State>, EngineError> {
    let counts = split_allocation(
        survivors.len(),
        total,
        &mut stream(seed, &[tag::ALLOCATION, t as u64]),
    )?;
    let kernel = model.kernel(t, gamma);
    let offspring: Vec<Vec<M::State>> = survivors
        .par_iter()
        .zip(counts.par_iter())
        .enumerate()
        .map(|(i, (y, &m))| {
            let mut rng = stream(seed, &[tag::SPLIT, t as u64, i as u64]);
            let mut out = Vec::with_capacity(m);
            let mut x = y.clone();
            for _ in 0..m {
                x = tau_step(&kernel, &x, tau, &mut rng);
                out.push(x.clone());
            }
            out
        })
        .collect();
    Ok(offspring.into_iter().flatten().collect())
}

fn check_inputs<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
) -> Result<LevelSchedule, EngineError> {
    config.validate()?;
    if levels.orientation() != spec.model.orientation() {
        return Err(EngineError::InvalidSchedule(format!(
            "schedule orientation {:?} does not match the model's {:?}",
            levels.orientation(),
            spec.model.orientation()
        )));
    }
    Ok(levels.closed())
}

/// One pass of the stratified splitting algorithm over a fixed schedule.
///
/// A schedule whose last threshold is finite is closed with the
/// orientation's sentinel. The result depends only on the arguments, not on
/// the number of worker threads.
pub fn run_ssa<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
    seed: u64,
) -> Result<SsaRun, EngineError> {
    let closed = check_inputs(spec, levels, config)?;
    let th = closed.thresholds();
    let n = th.len() - 1;
    let mut ledger = Ledger::new();
    let mut particles = initial_population(spec.model, config.samples, seed);
    for t in 1..=n {
        let survivors = ledger.stratify(spec, t, th[t - 1], th[t], particles);
        if t == n {
            break;
        }
        if survivors.is_empty() {
            ledger.mark_extinct(t);
            break;
        }
        particles = split(spec.model, &survivors, t, th[t], config.samples, config.burn_in, seed)?;
    }
    Ok(ledger.finish(th))
}

/// Population of an SSA pass after reaching level `target` (drawn from `f`
/// conditioned on `X_{target-1}`), or `None` if the pass dies on the way.
fn population_at<M: Model>(
    spec: &ProblemSpec<'_, M>,
    th: &[f64],
    target: usize,
    config: &RunConfig,
    seed: u64,
) -> Option<Vec<M::State>> {
    let orientation = spec.model.orientation();
    let mut particles = initial_population(spec.model, config.samples, seed);
    for t in 1..target {
        let survivors: Vec<M::State> = particles
            .into_iter()
            .filter(|s| orientation.admits(spec.model.performance(s), th[t]))
            .collect();
        if survivors.is_empty() {
            return None;
        }
        particles =
            split(spec.model, &survivors, t, th[t], config.samples, config.burn_in, seed).ok()?;
    }
    Some(particles)
}

/// One independent draw at level `t`: a uniformly chosen member of a fresh
/// SSA pass, retried on extinction.
fn independent_particle<M: Model>(
    spec: &ProblemSpec<'_, M>,
    th: &[f64],
    t: usize,
    config: &RunConfig,
    seed: u64,
    i: usize,
) -> Option<M::State> {
    (0..MAX_INDEPENDENT_ATTEMPTS).find_map(|attempt| {
        let pass_seed = derive_seed(seed, &[tag::INDEPENDENT, t as u64, i as u64, attempt as u64]);
        let mut pop = population_at(spec, th, t, config, pass_seed)?;
        let pick = stream(pass_seed, &[tag::INDEPENDENT]).random_range(0..pop.len());
        Some(pop.swap_remove(pick))
    })
}

/// Independent variant: the `N` particles of every level come from `N`
/// separate SSA passes, so within-level samples are independent (and levels
/// are independent of each other). Cost grows roughly quadratically in the
/// per-level effort of [`run_ssa`].
pub fn run_issa<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
    seed: u64,
) -> Result<SsaRun, EngineError> {
    let closed = check_inputs(spec, levels, config)?;
    let th = closed.thresholds();
    let n = th.len() - 1;
    let mut ledger = Ledger::new();
    for t in 1..=n {
        let particles: Option<Vec<M::State>> = if t == 1 {
            Some(initial_population(
                spec.model,
                config.samples,
                derive_seed(seed, &[tag::INDEPENDENT]),
            ))
        } else {
            (0..config.samples)
                .into_par_iter()
                .map(|i| independent_particle(spec, th, t, config, seed, i))
                .collect()
        };
        let Some(particles) = particles else {
            ledger.unreachable(t, th[t - 1], th[t]);
            break;
        };
        let survivors = ledger.stratify(spec, t, th[t - 1], th[t], particles);
        if t < n && survivors.is_empty() {
            ledger.mark_extinct(t);
            break;
        }
    }
    Ok(ledger.finish(th))
}

/// Dispatches on `config.mode`.
pub fn run<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
    seed: u64,
) -> Result<SsaRun, EngineError> {
    match config.mode {
        Mode::Ssa => run_ssa(spec, levels, config, seed),
        Mode::Issa => run_issa(spec, levels, config, seed),
    }
}

/// Seed of replication `j` under root seed `root`.
pub fn replication_seed(root: u64, j: usize) -> u64 {
    derive_seed(root, &[tag::REPLICATION, j as u64])
}

/// `count` independent runs with seeds derived from `config.seed`,
/// replications `first..first+count`.
pub fn replicate_runs<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
    first: usize,
    count: usize,
) -> Result<Vec<SsaRun>, EngineError> {
    (first..first + count)
        .into_par_iter()
        .map(|j| run(spec, levels, config, replication_seed(config.seed, j)))
        .collect()
}

/// `config.replications` independent runs summarised by mean and relative
/// error.
pub fn replicate<M: Model>(
    spec: &ProblemSpec<'_, M>,
    levels: &LevelSchedule,
    config: &RunConfig,
) -> Result<AggregateEstimate, EngineError> {
    let runs = replicate_runs(spec, levels, config, 0, config.replications)?;
    Ok(AggregateEstimate::from_runs(
        runs.iter().map(|r| r.estimate).collect(),
    ))
}
