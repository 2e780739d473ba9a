//! `ssa run` and `ssa pilot`.

use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use ssa_core::engine::{
    pilot_levels, replicate_runs, EngineError, LevelSchedule, Model, Orientation, ProblemSpec, RunConfig, SsaRun,
};
use ssa_core::models::credit::{check_levels, cvar_estimates, CreditModel};
use ssa_core::models::saw::{mu_estimate, saw_runs, saw_runs_until, SawEstimate};
use ssa_core::models::wcm::{tail_from_run, wcm_condexp, wcm_levels, CondExpSamples, WcmModel};
use ssa_core::oracles::{saw_count_exact, MAX_SAW_LENGTH};
use ssa_core::stats::{percent_error, AggregateEstimate};

use crate::config::{ModelKind, Resolved, ScheduleSource};
use crate::error::Failure;
use crate::output::{self, Quantity, SeriesRow, Summary};

/// Longest walk whose exact count is computed for the series CSV.
pub const SERIES_ORACLE_MAX: usize = 14;

enum Plan {
    Ready {
        schedule: LevelSchedule,
        pilot: Option<SsaRun>,
    },
    Stalled(LevelSchedule),
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

/// Levels strictly beyond the model's initial threshold, with that threshold
/// put first.
fn anchored(initial: f64, orientation: Orientation, extra: &[f64]) -> Result<LevelSchedule, Failure> {
    let mut all = vec![initial];
    all.extend(extra.iter().copied().filter(|&v| orientation.precedes(initial, v)));
    LevelSchedule::from_unsorted(all, orientation).map_err(config_error)
}

fn plan<M: Model>(
    spec: &ProblemSpec<'_, M>,
    r: &Resolved,
    natural: Option<LevelSchedule>,
    mandatory: &[f64],
    force_pilot: bool,
) -> Result<Plan, Failure> {
    let model = spec.model;
    if let (Some(levels), false) = (&r.levels, force_pilot) {
        let mut extra = levels.clone();
        extra.extend_from_slice(mandatory);
        let schedule = anchored(model.initial_threshold(), model.orientation(), &extra)?;
        return Ok(Plan::Ready { schedule, pilot: None });
    }
    let source = if force_pilot { ScheduleSource::Pilot } else { r.schedule_source() };
    match source {
        ScheduleSource::Model => {
            let natural = natural.ok_or_else(|| Failure::Config("this model has no built-in schedule".into()))?;
            let schedule = anchored(model.initial_threshold(), model.orientation(), &natural.thresholds()[1..])?
                .merge(&mandatory_beyond(model, mandatory))
                .map_err(config_error)?;
            Ok(Plan::Ready { schedule, pilot: None })
        }
        ScheduleSource::Pilot => match pilot_levels(spec, &r.run, &mandatory_beyond(model, mandatory)) {
            Ok(p) => Ok(Plan::Ready {
                schedule: p.schedule,
                pilot: Some(p.run),
            }),
            Err(EngineError::Stall { partial }) => Ok(Plan::Stalled(partial)),
            Err(e) => Err(config_error(e)),
        },
    }
}

fn mandatory_beyond<M: Model>(model: &M, mandatory: &[f64]) -> Vec<f64> {
    let initial = model.initial_threshold();
    mandatory
        .iter()
        .copied()
        .filter(|&v| model.orientation().precedes(initial, v))
        .collect()
}

/// Regular runs, preceded by the pilot pass when it is pooled.
fn execute<M: Model>(
    spec: &ProblemSpec<'_, M>,
    schedule: &LevelSchedule,
    pilot: Option<SsaRun>,
    config: &RunConfig,
) -> anyhow::Result<Vec<SsaRun>> {
    let mut runs = Vec::with_capacity(config.replications);
    let regular = match pilot {
        Some(p) if config.pool_pilot => {
            runs.push(p);
            config.regular_runs()
        }
        _ => config.replications,
    };
    runs.extend(replicate_runs(spec, schedule, config, 0, regular)?);
    Ok(runs)
}

fn finite_levels(schedule: &LevelSchedule) -> Vec<f64> {
    schedule.thresholds().iter().copied().filter(|v| v.is_finite()).collect()
}

struct Outcome {
    quantities: Vec<Quantity>,
    levels: Vec<f64>,
    csv: String,
    degenerate: Option<String>,
}

pub fn cmd_run(r: &Resolved) -> anyhow::Result<()> {
    let start = Instant::now();
    let outcome = match r.model {
        ModelKind::Wcm => run_wcm(r)?,
        ModelKind::Credit => run_credit(r)?,
        ModelKind::Saw => run_saw(r)?,
    };
    let first = outcome.quantities.first();
    let summary = Summary {
        model: r.model,
        estimate: first.and_then(|q| q.estimate),
        re: first.and_then(|q| q.re),
        per_run: first.map(|q| q.per_run.clone()).unwrap_or_default(),
        quantities: outcome.quantities,
        levels: outcome.levels,
        seed: r.run.seed,
        samples: r.run.samples,
        burn_in: r.run.burn_in,
        rho: r.run.rho,
        replications: r.run.replications,
        mode: r.run.mode,
        wall_time: start.elapsed().as_secs_f64(),
    };
    output::write_text(r.json.as_deref(), &output::to_json(&summary)?)?;
    if let Some(path) = &r.csv {
        output::write_text(Some(path), &outcome.csv)?;
    }
    match outcome.degenerate {
        Some(msg) => Err(Failure::Degenerate(msg).into()),
        None => Ok(()),
    }
}

fn stalled(partial: &LevelSchedule) -> Outcome {
    Outcome {
        quantities: Vec::new(),
        levels: finite_levels(partial),
        csv: format!("{}\n", output::STRATA_HEADER),
        degenerate: Some(format!(
            "pilot run stalled after {} thresholds; no estimates produced",
            partial.len()
        )),
    }
}

fn run_wcm(r: &Resolved) -> anyhow::Result<Outcome> {
    let section = r.wcm()?;
    let inst = &section.instance;
    let model = WcmModel::new(inst).map_err(config_error)?;
    let gamma = inst.gamma();
    let phi = move |x: &Vec<bool>| if inst.performance(x) <= gamma { 1.0 } else { 0.0 };
    let spec = ProblemSpec::new(&model, &phi);
    let mut mandatory = r.config.mandatory_levels.clone();
    mandatory.push(gamma);
    let natural = wcm_levels(inst).map_err(config_error)?;
    let (schedule, pilot) = match plan(&spec, r, Some(natural), &mandatory, false)? {
        Plan::Ready { schedule, pilot } => (schedule, pilot),
        Plan::Stalled(partial) => return Ok(stalled(&partial)),
    };
    let runs = execute(&spec, &schedule, pilot, &r.run)?;
    let tails = runs
        .iter()
        .map(|run| tail_from_run(inst, run))
        .collect::<Result<Vec<_>, _>>()?;
    let mut quantities = vec![Quantity::new(
        "tail",
        Some(gamma),
        Some(&AggregateEstimate::from_runs(tails)),
    )];
    if section.condexp {
        let cond = wcm_condexp(inst, &r.run, CondExpSamples::FromConfig).map_err(config_error)?;
        quantities.push(Quantity::new("condexp", Some(gamma), Some(&cond)));
    }
    Ok(Outcome {
        quantities,
        levels: finite_levels(&schedule),
        csv: output::strata_csv(&runs),
        degenerate: None,
    })
}

fn run_credit(r: &Resolved) -> anyhow::Result<Outcome> {
    let section = r.credit()?;
    let pf = section.portfolio.build().map_err(config_error)?;
    check_levels(&section.vars).map_err(config_error)?;
    let terminal = *section.vars.last().expect("checked non-empty");
    let model = CreditModel::with_terminal(&pf, terminal);
    let phi = |x: &Vec<f64>| pf.loss_flat(x);
    let spec = ProblemSpec::new(&model, &phi);
    let mut mandatory = section.vars.clone();
    mandatory.extend_from_slice(&r.config.mandatory_levels);
    let (schedule, pilot) = match plan(&spec, r, None, &mandatory, false)? {
        Plan::Ready { schedule, pilot } => (schedule, pilot),
        Plan::Stalled(partial) => return Ok(stalled(&partial)),
    };
    let runs = execute(&spec, &schedule, pilot, &r.run)?;
    let estimates = cvar_estimates(&section.vars, &runs);
    let mut quantities = Vec::new();
    let mut empty = Vec::new();
    for e in &estimates {
        if e.cvar.is_none() {
            empty.push(e.v.to_string());
        }
        quantities.push(Quantity::new("cvar", Some(e.v), e.cvar.as_ref()));
    }
    for e in &estimates {
        quantities.push(Quantity::new("tail", Some(e.v), Some(&e.tail)));
    }
    Ok(Outcome {
        quantities,
        levels: finite_levels(&schedule),
        csv: output::strata_csv(&runs),
        degenerate: (!empty.is_empty())
            .then(|| format!("no run reached the loss levels {}", empty.join(", "))),
    })
}

fn run_saw(r: &Resolved) -> anyhow::Result<Outcome> {
    let section = r.saw()?;
    if r.levels.is_some() || !r.config.mandatory_levels.is_empty() || r.config.schedule == Some(ScheduleSource::Pilot) {
        return Err(Failure::Config("walk levels are fixed at 0, 1, ..., n".into()).into());
    }
    let lengths = section.n.to_vec();
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(Failure::Config("walk lengths must be at least 1".into()).into());
    }
    if let Some(t) = section.re_target {
        if !(t > 0.0) {
            return Err(Failure::Config(format!("re_target must be positive, got {t}")).into());
        }
    }
    let mut rows = Vec::new();
    let mut quantities = Vec::new();
    let mut extinct = Vec::new();
    for &n in &lengths {
        let runs = match section.re_target {
            Some(t) => saw_runs_until(n, &r.run, t, section.max_replications.max(r.run.replications))?,
            None => saw_runs(n, &r.run, 0, r.run.replications)?,
        };
        let est = SawEstimate::from_runs(n, &runs);
        let exact = (n <= SERIES_ORACLE_MAX.min(MAX_SAW_LENGTH))
            .then(|| saw_count_exact(n))
            .transpose()?;
        let c = est.count.mean;
        rows.push(SeriesRow {
            n,
            c_hat: c,
            re: est.count.re,
            pe_vs_oracle: exact.and_then(|e| percent_error(c, e as f64).ok()),
            mu_hat: mu_estimate(c, n).ok(),
            delta_hat: est.delta.as_ref().map(|d| d.mean),
        });
        if est.delta.is_none() {
            extinct.push(n.to_string());
        }
        quantities.push(Quantity::new("count", Some(n as f64), Some(&est.count)));
        quantities.push(Quantity::new("delta", Some(n as f64), est.delta.as_ref()));
    }
    let longest = *lengths.iter().max().expect("non-empty");
    Ok(Outcome {
        quantities,
        levels: (0..=longest).map(|t| t as f64).collect(),
        csv: output::series_csv(&rows),
        degenerate: (!extinct.is_empty())
            .then(|| format!("every run went extinct for n = {}", extinct.join(", "))),
    })
}

/// Document written by `ssa pilot` and accepted by `--levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotOutput {
    pub levels: Vec<f64>,
}

pub fn cmd_pilot(r: &Resolved) -> anyhow::Result<()> {
    let plan = match r.model {
        ModelKind::Wcm => {
            let inst = &r.wcm()?.instance;
            let model = WcmModel::new(inst).map_err(config_error)?;
            let gamma = inst.gamma();
            let phi = move |x: &Vec<bool>| if inst.performance(x) <= gamma { 1.0 } else { 0.0 };
            let mut mandatory = r.config.mandatory_levels.clone();
            mandatory.push(gamma);
            plan(&ProblemSpec::new(&model, &phi), r, None, &mandatory, true)?
        }
        ModelKind::Credit => {
            let section = r.credit()?;
            let pf = section.portfolio.build().map_err(config_error)?;
            check_levels(&section.vars).map_err(config_error)?;
            let model = CreditModel::with_terminal(&pf, *section.vars.last().expect("checked"));
            let phi = |x: &Vec<f64>| pf.loss_flat(x);
            let mut mandatory = section.vars.clone();
            mandatory.extend_from_slice(&r.config.mandatory_levels);
            plan(&ProblemSpec::new(&model, &phi), r, None, &mandatory, true)?
        }
        ModelKind::Saw => return Err(Failure::Config("walk levels are fixed at 0, 1, ..., n".into()).into()),
    };
    let (schedule, stall) = match plan {
        Plan::Ready { schedule, .. } => (schedule, None),
        Plan::Stalled(partial) => {
            let msg = format!("pilot run stalled after {} thresholds", partial.len());
            (partial, Some(msg))
        }
    };
    let out = PilotOutput {
        levels: finite_levels(&schedule),
    };
    output::write_text(r.json.as_deref(), &output::to_json(&out)?).context("writing the schedule")?;
    match stall {
        Some(msg) => Err(Failure::Degenerate(msg).into()),
        None => Ok(()),
    }
}
