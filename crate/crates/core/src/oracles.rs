//! Reference values computed without the estimators: exhaustive enumeration
//! for the component model, depth-first search for walks, plain Monte Carlo
//! for credit losses. Performance functions are re-implemented here rather
//! than imported.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::models::credit::Portfolio;
use crate::rng::stream;

/// Largest component count accepted by [`wcm_enumerate`].
pub const MAX_WCM_COMPONENTS: usize = 24;
/// Longest walk accepted by the depth-first counter.
pub const MAX_SAW_LENGTH: usize = 18;
/// Hits required before plain Monte Carlo is trusted.
pub const MIN_CMC_HITS: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{what} of size {size} exceeds the oracle limit {limit}")]
    TooLarge { what: &'static str, size: usize, limit: usize },
    #[error("rare regime: {hits} of {samples} samples hit the event, at least {required} needed")]
    RefuseRareRegime { hits: u64, samples: u64, required: u64 },
    #[error("invalid oracle input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleMethod {
    Enumeration,
    Dfs,
    PlainMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub method: OracleMethod,
    /// States or samples visited.
    pub work: u64,
    /// Zero for the exact methods.
    pub standard_error: f64,
}

impl OracleResult {
    fn exact(value: f64, method: OracleMethod, work: u64) -> Self {
        Self {
            value,
            method,
            work,
            standard_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WcmExact {
    pub tail: OracleResult,
    /// `None` when no state qualifies.
    pub cond_exp: Option<OracleResult>,
}

fn check_components(k: usize) -> Result<(), OracleError> {
    if k > MAX_WCM_COMPONENTS {
        return Err(OracleError::TooLarge {
            what: "component vector",
            size: k,
            limit: MAX_WCM_COMPONENTS,
        });
    }
    Ok(())
}

/// Visits every `x in {0,1}^k`, passing `w.x` (summed in index order).
fn for_each_state(w: &[f64], mut visit: impl FnMut(f64)) {
    for mask in 0u32..(1u32 << w.len()) {
        let mut s = 0.0;
        for (i, wi) in w.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += wi;
            }
        }
        visit(s);
    }
}

/// Exact `P(S <= gamma)` and `E[S | S <= gamma]` over all `2^k` states.
pub fn wcm_enumerate(w: &[f64], gamma: f64) -> Result<WcmExact, OracleError> {
    check_components(w.len())?;
    let states = 1u64 << w.len();
    let (mut hits, mut sum) = (0u64, 0.0);
    for_each_state(w, |s| {
        if s <= gamma {
            hits += 1;
            sum += s;
        }
    });
    Ok(WcmExact {
        tail: OracleResult::exact(hits as f64 / states as f64, OracleMethod::Enumeration, states),
        cond_exp: (hits > 0)
            .then(|| OracleResult::exact(sum / hits as f64, OracleMethod::Enumeration, states)),
    })
}

/// `|{x : w.x <= b}|`.
pub fn wcm_count(w: &[f64], b: f64) -> Result<u64, OracleError> {
    check_components(w.len())?;
    let mut hits = 0;
    for_each_state(w, |s| hits += u64::from(s <= b));
    Ok(hits)
}

/// All `2^k` values of `S`, sorted.
pub fn wcm_performances(w: &[f64]) -> Result<Vec<f64>, OracleError> {
    check_components(w.len())?;
    let mut all = Vec::with_capacity(1 << w.len());
    for_each_state(w, |s| all.push(s));
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Exact walk count and mean endpoint distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SawExact {
    pub n: usize,
    pub count: u64,
    pub delta: f64,
    /// Search-tree nodes expanded.
    pub nodes: u64,
}

impl SawExact {
    pub fn count_result(&self) -> OracleResult {
        OracleResult::exact(self.count as f64, OracleMethod::Dfs, self.nodes)
    }

    pub fn delta_result(&self) -> OracleResult {
        OracleResult::exact(self.delta, OracleMethod::Dfs, self.nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SawSymmetry {
    /// Enumerate every walk.
    #[default]
    None,
    /// Fix the first step and the first turn, then weight by the eight
    /// lattice symmetries.
    Eightfold,
}

struct Grid {
    side: usize,
    occupied: Vec<bool>,
    n: usize,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    count: u64,
    norm_sum: f64,
    nodes: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            count: self.count + other.count,
            norm_sum: self.norm_sum + other.norm_sum,
            nodes: self.nodes + other.nodes,
        }
    }
}

const MOVES: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl Grid {
    fn new(n: usize) -> Self {
        let side = 2 * n + 3;
        Self {
            side,
            occupied: vec![false; side * side],
            n,
        }
    }

    fn index(&self, x: i64, y: i64) -> usize {
        let off = (self.n + 1) as i64;
        ((y + off) as usize) * self.side + (x + off) as usize
    }

    /// Counts completions of a walk at `(x, y)` with `left` steps to go,
    /// adding `weight` per completed walk.
    fn extend(&mut self, x: i64, y: i64, left: usize, tally: &mut Tally) {
        tally.nodes += 1;
        if left == 0 {
            tally.count += 1;
            tally.norm_sum += ((x * x + y * y) as f64).sqrt();
            return;
        }
        for (dx, dy) in MOVES {
            let (nx, ny) = (x + dx, y + dy);
            let idx = self.index(nx, ny);
            if !self.occupied[idx] {
                self.occupied[idx] = true;
                self.extend(nx, ny, left - 1, tally);
                self.occupied[idx] = false;
            }
        }
    }

    fn walk_from(&mut self, path: &[(i64, i64)], left: usize) -> Tally {
        for &(x, y) in path {
            let idx = self.index(x, y);
            self.occupied[idx] = true;
        }
        let mut tally = Tally::default();
        let &(x, y) = path.last().expect("path starts at the origin");
        self.extend(x, y, left, &mut tally);
        tally
    }
}

/// Depth-first enumeration of all walks of length `n`.
pub fn saw_enumerate(n: usize, symmetry: SawSymmetry) -> Result<SawExact, OracleError> {
    if n > MAX_SAW_LENGTH {
        return Err(OracleError::TooLarge {
            what: "walk length",
            size: n,
            limit: MAX_SAW_LENGTH,
        });
    }
    if n == 0 {
        return Ok(SawExact { n, count: 1, delta: 0.0, nodes: 1 });
    }
    let tally = match symmetry {
        SawSymmetry::None => MOVES
            .par_iter()
            .map(|&step| Grid::new(n).walk_from(&[(0, 0), step], n - 1))
            .reduce(Tally::default, Tally::merge),
        SawSymmetry::Eightfold => {
            // Walks that start with `s` straight steps along +x and then turn
            // up; each stands for eight images. The fully straight walk
            // stands for four.
            let turned = (1..n)
                .into_par_iter()
                .map(|s| {
                    let mut path: Vec<(i64, i64)> = (0..=s as i64).map(|i| (i, 0)).collect();
                    path.push((s as i64, 1));
                    let t = Grid::new(n).walk_from(&path, n - s - 1);
                    Tally {
                        count: 8 * t.count,
                        norm_sum: 8.0 * t.norm_sum,
                        nodes: t.nodes,
                    }
                })
                .reduce(Tally::default, Tally::merge);
            turned.merge(Tally {
                count: 4,
                norm_sum: 4.0 * n as f64,
                nodes: 1,
            })
        }
    };
    Ok(SawExact {
        n,
        count: tally.count,
        delta: tally.norm_sum / tally.count as f64,
        nodes: tally.nodes,
    })
}

/// Exact `c_n`.
pub fn saw_count_exact(n: usize) -> Result<u64, OracleError> {
    Ok(saw_enumerate(n, SawSymmetry::None)?.count)
}

/// Exact mean endpoint distance over walks of length `n`.
pub fn saw_delta_exact(n: usize) -> Result<f64, OracleError> {
    Ok(saw_enumerate(n, SawSymmetry::None)?.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CreditCmc {
    pub v: f64,
    /// `P(L >= v)`.
    pub tail: OracleResult,
    /// `E[L | L >= v]`.
    pub cvar: OracleResult,
}

/// Samples per independent stream of the plain Monte Carlo oracle.
const CMC_CHUNK: u64 = 1 << 16;

#[derive(Default, Clone, Copy)]
struct LossMoments {
    hits: u64,
    sum: f64,
    sum_sq: f64,
}

/// Plain Monte Carlo over the latent Gaussians for `P(L >= v)` and
/// `E[L | L >= v]`. Refuses when `v` exceeds the maximal loss or fewer than
/// [`MIN_CMC_HITS`] samples hit the event.
pub fn credit_cmc(pf: &Portfolio, v: f64, samples: u64, seed: u64) -> Result<CreditCmc, OracleError> {
    let k = pf.losses().len();
    let max_loss: f64 = pf.losses().iter().sum();
    if v.is_nan() || samples == 0 {
        return Err(OracleError::Invalid(format!("v = {v}, samples = {samples}")));
    }
    if v > max_loss {
        return Err(OracleError::RefuseRareRegime {
            hits: 0,
            samples,
            required: MIN_CMC_HITS,
        });
    }
    let normal = Normal::standard();
    // Latent score Y_i = a_i.z + sqrt(1 - |a_i|^2) e_i defaults when it lies
    // in the upper p_i tail.
    let obligors: Vec<(Vec<f64>, f64, f64, f64)> = (0..k)
        .map(|i| {
            let a = pf.loadings()[i].clone();
            let b = (1.0 - a.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let cut = -normal.inverse_cdf(pf.default_probs()[i]);
            (a, b, cut, pf.losses()[i])
        })
        .collect();
    let d = pf.loadings()[0].len();
    let chunks = samples.div_ceil(CMC_CHUNK);
    let m = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, &[c]);
            let count = CMC_CHUNK.min(samples - c * CMC_CHUNK);
            let mut acc = LossMoments::default();
            let mut z = vec![0.0; d];
            for _ in 0..count {
                z.iter_mut().for_each(|zj| *zj = rng.sample(StandardNormal));
                let mut loss = 0.0;
                for (a, b, cut, l) in &obligors {
                    let e: f64 = rng.sample(StandardNormal);
                    let y = a.iter().zip(&z).fold(b * e, |s, (ai, zi)| s + ai * zi);
                    if y > *cut {
                        loss += l;
                    }
                }
                if loss >= v {
                    acc.hits += 1;
                    acc.sum += loss;
                    acc.sum_sq += loss * loss;
                }
            }
            acc
        })
        .reduce(LossMoments::default, |a, b| LossMoments {
            hits: a.hits + b.hits,
            sum: a.sum + b.sum,
            sum_sq: a.sum_sq + b.sum_sq,
        });
    if m.hits < MIN_CMC_HITS {
        return Err(OracleError::RefuseRareRegime {
            hits: m.hits,
            samples,
            required: MIN_CMC_HITS,
        });
    }
    let n = samples as f64;
    let h = m.hits as f64;
    let p = h / n;
    let mean = m.sum / h;
    let var = ((m.sum_sq - h * mean * mean) / (h - 1.0)).max(0.0);
    Ok(CreditCmc {
        v,
        tail: OracleResult {
            value: p,
            method: OracleMethod::PlainMc,
            work: samples,
            standard_error: (p * (1.0 - p) / n).sqrt(),
        },
        cvar: OracleResult {
            value: mean,
            method: OracleMethod::PlainMc,
            work: samples,
            standard_error: (var / h).sqrt(),
        },
    })
}

/// Empirical `q`-quantile of the loss from plain sampling, used to pick
/// moderate test levels.
pub fn credit_loss_quantile(pf: &Portfolio, q: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, &[]);
    let d = pf.loadings()[0].len();
    let normal = Normal::standard();
    let mut losses: Vec<f64> = (0..samples)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..pf.losses().len())
                .map(|i| {
                    let a = &pf.loadings()[i];
                    let b = (1.0 - a.iter().map(|x| x * x).sum::<f64>()).sqrt();
                    let e: f64 = rng.sample(StandardNormal);
                    let y = a.iter().zip(&z).fold(b * e, |s, (ai, zi)| s + ai * zi);
                    // Upper-tail probability of the score below p_i means default.
                    if normal.sf(y) < pf.default_probs()[i] {
                        pf.losses()[i]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    losses.sort_by(f64::total_cmp);
    let idx = ((q * samples as f64).ceil() as usize).clamp(1, samples) - 1;
    losses[idx]
}
