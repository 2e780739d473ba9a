//! Normal-copula portfolio credit risk.
//!
//! Obligor `i` defaults when its latent score `a_i.z + b_i eps_i` exceeds
//! `x_i = Phi^-1(1 - p_i)`, with `z ~ N(0, I_d)` systematic factors,
//! `eps ~ N(0, I_k)` idiosyncratic noise and `b_i = sqrt(1 - |a_i|^2)`. The
//! loss is `L = sum_i l_i X_i`.
//!
//! The splitting state is the latent Gaussian vector `(z, eps)` of dimension
//! `d + k`, moved by Hit-and-Run restricted to `{L >= gamma}`. Several
//! conditional values at risk come out of a single run: every VaR level is a
//! stratum boundary, and `E[L | L >= v]` is the ratio of the stratum sums
//! above `v`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::engine::{
    pilot_levels, replicate_runs, EngineError, Model, Orientation, ProblemSpec, RunConfig, SsaRun,
};
use crate::kernels::{GaussianLevelConstraint, HitAndRunKernel, LatentPerformance};
use crate::rng::stream;
use crate::stats::AggregateEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CreditError {
    #[error("portfolio needs at least one obligor and one factor (k = {k}, d = {d})")]
    EmptyPortfolio { k: usize, d: usize },
    #[error("obligor {index}: {reason}")]
    InvalidObligor { index: usize, reason: String },
    #[error("VaR levels must be finite and strictly ascending")]
    UnsortedLevels,
    #[error("no replication produced a particle with loss at or above {v}")]
    EmptyUpperStrata { v: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Factor-copula portfolio with derived idiosyncratic weights and default
/// thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    loadings: Vec<Vec<f64>>,
    losses: Vec<f64>,
    default_probs: Vec<f64>,
    idiosyncratic: Vec<f64>,
    thresholds: Vec<f64>,
}

impl Portfolio {
    pub fn new(
        loadings: Vec<Vec<f64>>,
        losses: Vec<f64>,
        default_probs: Vec<f64>,
    ) -> Result<Self, CreditError> {
        let k = loadings.len();
        let d = loadings.first().map_or(0, Vec::len);
        if k == 0 || d == 0 {
            return Err(CreditError::EmptyPortfolio { k, d });
        }
        let bad = |index: usize, reason: String| CreditError::InvalidObligor { index, reason };
        if losses.len() != k || default_probs.len() != k {
            return Err(bad(
                0,
                format!(
                    "{k} loading rows but {} losses and {} default probabilities",
                    losses.len(),
                    default_probs.len()
                ),
            ));
        }
        let normal = Normal::standard();
        let mut idiosyncratic = Vec::with_capacity(k);
        let mut thresholds = Vec::with_capacity(k);
        for (i, row) in loadings.iter().enumerate() {
            if row.len() != d {
                return Err(bad(i, format!("{} loadings, expected {d}", row.len())));
            }
            let norm2: f64 = row.iter().map(|a| a * a).sum();
            if !(norm2 < 1.0) {
                return Err(bad(i, format!("loading norm^2 {norm2} is not below 1")));
            }
            if !(losses[i] > 0.0 && losses[i].is_finite()) {
                return Err(bad(i, format!("loss {} must be positive", losses[i])));
            }
            let p = default_probs[i];
            if !(p > 0.0 && p < 1.0) {
                return Err(bad(i, format!("default probability {p} outside (0, 1)")));
            }
            idiosyncratic.push((1.0 - norm2).sqrt());
            // Upper-tail form keeps tiny probabilities resolvable.
            thresholds.push(-normal.inverse_cdf(p));
        }
        Ok(Self {
            loadings,
            losses,
            default_probs,
            idiosyncratic,
            thresholds,
        })
    }

    pub fn k(&self) -> usize {
        self.losses.len()
    }

    pub fn d(&self) -> usize {
        self.loadings[0].len()
    }

    pub fn dimension(&self) -> usize {
        self.k() + self.d()
    }

    pub fn loadings(&self) -> &[Vec<f64>] {
        &self.loadings
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn default_probs(&self) -> &[f64] {
        &self.default_probs
    }

    /// `b_i = sqrt(1 - |a_i|^2)`.
    pub fn idiosyncratic_weights(&self) -> &[f64] {
        &self.idiosyncratic
    }

    /// `x_i = Phi^-1(1 - p_i)`.
    pub fn default_thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn max_loss(&self) -> f64 {
        self.losses.iter().sum()
    }

    fn score(&self, i: usize, z: &[f64], eps_i: f64) -> f64 {
        let systematic: f64 = self.loadings[i].iter().zip(z).map(|(a, zj)| a * zj).sum();
        systematic + self.idiosyncratic[i] * eps_i
    }

    /// Loss of a flattened latent vector `(z, eps)`.
    pub fn loss_flat(&self, x: &[f64]) -> f64 {
        let (z, eps) = x.split_at(self.d());
        (0..self.k())
            .filter(|&i| self.score(i, z, eps[i]) > self.thresholds[i])
            .map(|i| self.losses[i])
            .sum()
    }

    /// One exact draw of the latent vector.
    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dimension()).map(|_| rng.sample(StandardNormal)).collect()
    }
}

impl LatentPerformance for Portfolio {
    fn performance(&self, x: &[f64]) -> f64 {
        self.loss_flat(x)
    }

    /// Scores are affine in `lambda`, so each obligor reduces to a
    /// `(score, slope)` pair computed once per line.
    fn along_line<'a>(&'a self, x: &'a [f64], d: &'a [f64]) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let (xz, xe) = x.split_at(self.d());
        let (dz, de) = d.split_at(self.d());
        let lines: Vec<(f64, f64)> = (0..self.k())
            .map(|i| (self.score(i, xz, xe[i]), self.score(i, dz, de[i])))
            .collect();
        Box::new(move |lambda| {
            lines
                .iter()
                .zip(&self.thresholds)
                .zip(&self.losses)
                .filter(|((line, x), _)| line.0 + lambda * line.1 > **x)
                .map(|(_, l)| l)
                .sum()
        })
    }
}

/// Systematic and idiosyncratic parts of a latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
}

impl LatentState {
    pub fn from_flat(x: &[f64], d: usize) -> Self {
        let (z, eps) = x.split_at(d);
        Self {
            z: z.to_vec(),
            eps: eps.to_vec(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.z.iter().chain(&self.eps).copied().collect()
    }
}

/// `X_i = 1{a_i.z + b_i eps_i > x_i}`.
pub fn default_indicators(pf: &Portfolio, s: &LatentState) -> Vec<bool> {
    (0..pf.k())
        .map(|i| pf.score(i, &s.z, s.eps[i]) > pf.thresholds[i])
        .collect()
}

/// `L = sum_i l_i X_i`.
pub fn loss(pf: &Portfolio, s: &LatentState) -> f64 {
    default_indicators(pf, s)
        .iter()
        .zip(&pf.losses)
        .filter(|(x, _)| **x)
        .map(|(_, l)| l)
        .sum()
}

/// Synthetic portfolio: `p_i = 0.01 (1 + sin(16 pi i / k))` (floored at
/// [`MIN_DEFAULT_PROB`]), `l_i = ceil(5 i / k)^2`, loadings uniform on
/// `(0, 1/sqrt(d))`.
pub fn glasserman_li_portfolio(k: usize, d: usize, seed: u64) -> Result<Portfolio, CreditError> {
    if k == 0 || d == 0 {
        return Err(CreditError::EmptyPortfolio { k, d });
    }
    let mut rng = stream(seed, &[]);
    let cap = 1.0 / (d as f64).sqrt();
    let loadings = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| loop {
                    let a = rng.random_range(0.0..cap);
                    if a > 0.0 {
                        break a;
                    }
                })
                .collect()
        })
        .collect();
    let kf = k as f64;
    let losses = (1..=k)
        .map(|i| (5.0 * i as f64 / kf).ceil().powi(2))
        .collect();
    let probs = (1..=k)
        .map(|i| (0.01 * (1.0 + (16.0 * PI * i as f64 / kf).sin())).max(MIN_DEFAULT_PROB))
        .collect();
    Portfolio::new(loadings, losses, probs)
}

/// Floor on generated default probabilities; the sine formula touches zero
/// whenever `i / k = 3/32 mod 1/8`.
pub const MIN_DEFAULT_PROB: f64 = 1e-6;

/// On-disk portfolio description: explicit parameters or a generator call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PortfolioSpec {
    Generator { generator: GeneratorSpec },
    Explicit(ExplicitPortfolio),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub k: usize,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPortfolio {
    pub k: usize,
    pub d: usize,
    pub loadings: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub default_probs: Vec<f64>,
}

impl PortfolioSpec {
    pub fn build(&self) -> Result<Portfolio, CreditError> {
        match self {
            PortfolioSpec::Generator { generator: g } => glasserman_li_portfolio(g.k, g.d, g.seed),
            PortfolioSpec::Explicit(e) => {
                let pf = Portfolio::new(e.loadings.clone(), e.losses.clone(), e.default_probs.clone())?;
                if pf.k() != e.k || pf.d() != e.d {
                    return Err(CreditError::InvalidObligor {
                        index: 0,
                        reason: format!(
                            "declared k = {}, d = {} but loadings are {} x {}",
                            e.k,
                            e.d,
                            pf.k(),
                            pf.d()
                        ),
                    });
                }
                Ok(pf)
            }
        }
    }
}

/// Engine model over the latent space. Adaptive levels stop at `terminal`.
#[derive(Debug, Clone)]
pub struct CreditModel<'a> {
    pf: &'a Portfolio,
    terminal: f64,
}

impl<'a> CreditModel<'a> {
    pub fn new(pf: &'a Portfolio) -> Self {
        Self {
            pf,
            terminal: pf.max_loss(),
        }
    }

    /// Stops adaptive level placement at `terminal` (clamped to the maximum
    /// loss).
    pub fn with_terminal(pf: &'a Portfolio, terminal: f64) -> Self {
        Self {
            pf,
            terminal: terminal.min(pf.max_loss()),
        }
    }
}

impl Model for CreditModel<'_> {
    type State = Vec<f64>;
    type Kernel<'k>
        = HitAndRunKernel<'k, Portfolio>
    where
        Self: 'k;

    fn orientation(&self) -> Orientation {
        Orientation::SuperLevel
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.pf.sample_latent(rng)
    }

    fn performance(&self, state: &Vec<f64>) -> f64 {
        self.pf.loss_flat(state)
    }

    fn kernel(&self, _level: usize, threshold: f64) -> HitAndRunKernel<'_, Portfolio> {
        HitAndRunKernel {
            constraint: GaussianLevelConstraint {
                threshold,
                orientation: Orientation::SuperLevel,
                performance: self.pf,
            },
        }
    }

    fn initial_threshold(&self) -> f64 {
        0.0
    }

    fn terminal_threshold(&self) -> f64 {
        self.terminal
    }
}

/// Sums of `P_t` and `C_t` over the strata lying at or above `v`.
pub fn upper_sums(run: &SsaRun, v: f64) -> (f64, f64) {
    run.strata
        .iter()
        .filter(|s| s.gamma_from >= v)
        .fold((0.0, 0.0), |(p, c), s| (p + s.p_hat, c + s.c_hat))
}

/// Conditional value at risk of one run, `None` when no probability mass
/// was found above `v`.
pub fn run_cvar(run: &SsaRun, v: f64) -> Option<f64> {
    let (p, c) = upper_sums(run, v);
    (p > 0.0).then(|| c / p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvarEstimate {
    pub v: f64,
    /// Ratio estimates over the runs with mass above `v`; `None` when there
    /// were none.
    pub cvar: Option<AggregateEstimate>,
    /// `P(L >= v)` from the same runs.
    pub tail: AggregateEstimate,
    /// Runs without any mass above `v`, left out of `cvar`.
    pub empty_runs: usize,
}

impl CvarEstimate {
    pub fn require(&self) -> Result<&AggregateEstimate, CreditError> {
        self.cvar
            .as_ref()
            .ok_or(CreditError::EmptyUpperStrata { v: self.v })
    }
}

#[derive(Debug, Clone)]
pub struct CvarReport {
    pub estimates: Vec<CvarEstimate>,
    pub schedule: Vec<f64>,
    pub runs: Vec<SsaRun>,
}

/// VaR levels must be finite, strictly ascending and non-empty.
pub fn check_levels(vars: &[f64]) -> Result<(), CreditError> {
    let finite = vars.iter().all(|v| v.is_finite());
    let ascending = vars.windows(2).all(|w| w[0] < w[1]);
    if finite && ascending && !vars.is_empty() {
        Ok(())
    } else {
        Err(CreditError::UnsortedLevels)
    }
}

/// Runs the pilot (with every VaR as a mandatory level) and the replicated
/// fixed-level runs with `phi = L`.
pub fn credit_runs(
    pf: &Portfolio,
    vars: &[f64],
    config: &RunConfig,
    phi: &(dyn Fn(&Vec<f64>) -> f64 + Sync),
) -> Result<(Vec<f64>, Vec<SsaRun>), CreditError> {
    let terminal = vars.last().copied().unwrap_or(f64::INFINITY);
    let model = CreditModel::with_terminal(pf, terminal);
    let spec = ProblemSpec::new(&model, phi);
    let pilot = pilot_levels(&spec, config, vars)?;
    let mut runs = Vec::with_capacity(config.replications);
    if config.pool_pilot {
        runs.push(pilot.run.clone());
    }
    runs.extend(replicate_runs(&spec, &pilot.schedule, config, 0, config.regular_runs())?);
    Ok((pilot.schedule.thresholds().to_vec(), runs))
}

/// Per-VaR CVaR and tail summaries of runs made with `phi = L` on a schedule
/// containing every `v_j` as a threshold.
pub fn cvar_estimates(vars: &[f64], runs: &[SsaRun]) -> Vec<CvarEstimate> {
    vars.iter()
        .map(|&v| {
            let per_run: Vec<Option<f64>> = runs.iter().map(|r| run_cvar(r, v)).collect();
            let defined: Vec<f64> = per_run.iter().flatten().copied().collect();
            CvarEstimate {
                v,
                empty_runs: per_run.len() - defined.len(),
                cvar: (!defined.is_empty()).then(|| AggregateEstimate::from_runs(defined)),
                tail: AggregateEstimate::from_runs(runs.iter().map(|r| upper_sums(r, v).0).collect()),
            }
        })
        .collect()
}

/// `E[L | L >= v_j]` for every `v_j`, from one stratified run per
/// replication. Each run's value is a ratio of two unbiased sums, so it
/// carries an `O(1/N)` bias of its own.
pub fn cvar_multi(pf: &Portfolio, vars: &[f64], config: &RunConfig) -> Result<CvarReport, CreditError> {
    config.validate()?;
    check_levels(vars)?;
    let phi = |x: &Vec<f64>| pf.loss_flat(x);
    let (schedule, runs) = credit_runs(pf, vars, config, &phi)?;
    let estimates = cvar_estimates(vars, &runs);
    Ok(CvarReport {
        estimates,
        schedule,
        runs,
    })
}

/// `P(L >= v)` with `phi = 1{L >= v}`; exact for `v <= 0` and `v > sum l`.
pub fn tail_prob(pf: &Portfolio, v: f64, config: &RunConfig) -> Result<AggregateEstimate, CreditError> {
    config.validate()?;
    if v.is_nan() {
        return Err(CreditError::UnsortedLevels);
    }
    let exact = if v <= 0.0 {
        Some(1.0)
    } else if v > pf.max_loss() {
        Some(0.0)
    } else {
        None
    };
    if let Some(p) = exact {
        return Ok(AggregateEstimate::from_runs(vec![p; config.replications]));
    }
    let phi = |x: &Vec<f64>| if pf.loss_flat(x) >= v { 1.0 } else { 0.0 };
    let (_, runs) = credit_runs(pf, &[v], config, &phi)?;
    Ok(AggregateEstimate::from_runs(runs.iter().map(|r| r.estimate).collect()))
}
