use super::ssa::{initial_population, split, Ledger};
use super::{EngineError, LevelSchedule, Model, Orientation, ProblemSpec, RunConfig, SsaRun};
use crate::rng::{derive_seed, tag};

/// Upper bound on adaptive levels before the pilot gives up.
pub const MAX_PILOT_LEVELS: usize = 1000;

/// Frozen schedule of a pilot pass, together with the pass itself (usable as
/// one replication when pooling is requested).
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    pub schedule: LevelSchedule,
    pub run: SsaRun,
}

/// The `ceil(rho * N)`-th best performance. Particles tied with it qualify
/// too, so the surviving fraction can exceed `rho`.
pub fn next_adaptive_level(performances: &[f64], rho: f64, orientation: Orientation) -> Option<f64> {
    if performances.is_empty() {
        return None;
    }
    let mut sorted = performances.to_vec();
    // Best first.
    sorted.sort_by(|a, b| orientation.order(*b, *a));
    let k = ((rho * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[k - 1])
}

/// Best performance strictly beyond `prev`, nearest to it.
fn nearest_beyond(performances: &[f64], prev: f64, orientation: Orientation) -> Option<f64> {
    performances
        .iter()
        .copied()
        .filter(|&p| orientation.precedes(prev, p))
        .min_by(|a, b| orientation.order(*a, *b))
}

/// One adaptive pass choosing each next level as the rho-quantile of the
/// current particles, then freezing the thresholds.
///
/// A quantile that fails to move past the previous level falls back to the
/// nearest strictly better performance; if there is none the pilot stalls.
/// Mandatory thresholds lying inside a step cut that step short, so every
/// one of them is a stratum boundary of the pass. Once the model's terminal
/// threshold is reached it becomes the last finite level.
pub fn pilot_levels<M: Model>(
    spec: &ProblemSpec<'_, M>,
    config: &RunConfig,
    mandatory: &[f64],
) -> Result<Pilot, EngineError> {
    config.validate()?;
    let model = spec.model;
    let orientation = model.orientation();
    let terminal = model.terminal_threshold();
    let sentinel = orientation.sentinel();
    if mandatory.iter().any(|v| v.is_nan()) {
        return Err(EngineError::InvalidSchedule("NaN mandatory level".into()));
    }
    let seed = derive_seed(config.seed, &[tag::PILOT]);

    let mut thresholds = vec![model.initial_threshold()];
    let mut ledger = Ledger::new();
    let mut particles = initial_population(model, config.samples, seed);
    let stall = |th: &[f64]| EngineError::Stall {
        partial: LevelSchedule::new(th.to_vec(), orientation)
            .expect("pilot thresholds are strictly monotone by construction"),
    };

    for t in 1.. {
        let prev = *thresholds.last().expect("non-empty");
        let level = if !orientation.precedes(prev, terminal) {
            sentinel
        } else {
            if t > MAX_PILOT_LEVELS {
                return Err(stall(&thresholds));
            }
            let perfs: Vec<f64> = particles.iter().map(|s| model.performance(s)).collect();
            let mut q = next_adaptive_level(&perfs, config.rho, orientation)
                .filter(|&q| orientation.precedes(prev, q))
                .or_else(|| nearest_beyond(&perfs, prev, orientation))
                .ok_or_else(|| stall(&thresholds))?;
            if let Some(m) = mandatory
                .iter()
                .copied()
                .filter(|&m| orientation.precedes(prev, m) && orientation.precedes(m, q))
                .min_by(|a, b| orientation.order(*a, *b))
            {
                q = m;
            }
            if !orientation.precedes(q, terminal) {
                q = terminal;
            }
            q
        };
        thresholds.push(level);
        let survivors = ledger.stratify(spec, t, prev, level, particles);
        if level == sentinel {
            break;
        }
        if survivors.is_empty() {
            // Cannot happen with tie-inclusive quantiles, but a model whose
            // terminal level nobody reaches would end here.
            ledger.mark_extinct(t);
            return Err(stall(&thresholds));
        }
        particles = split(model, &survivors, t, level, config.samples, config.burn_in, seed)?;
    }

    let run = ledger.finish(&thresholds);
    let schedule = LevelSchedule::new(thresholds, orientation)?.merge(mandatory)?;
    Ok(Pilot { schedule, run })
}
