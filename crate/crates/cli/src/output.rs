//! JSON summaries and CSV tables.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use ssa_core::engine::{Mode, SsaRun};
use ssa_core::stats::AggregateEstimate;

use crate::config::ModelKind;

/// One estimated quantity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub name: String,
    /// Value-at-risk or walk length the quantity refers to, if any.
    pub at: Option<f64>,
    /// `None` when no replication produced a value.
    pub estimate: Option<f64>,
    pub re: Option<f64>,
    pub per_run: Vec<f64>,
}

impl Quantity {
    pub fn new(name: impl Into<String>, at: Option<f64>, agg: Option<&AggregateEstimate>) -> Self {
        Self {
            name: name.into(),
            at,
            estimate: agg.map(|a| a.mean),
            re: agg.and_then(|a| a.re),
            per_run: agg.map(|a| a.per_run.clone()).unwrap_or_default(),
        }
    }
}

/// The `run` command's JSON document. The top-level `estimate`, `re` and
/// `per_run` repeat the first quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub model: ModelKind,
    pub estimate: Option<f64>,
    pub re: Option<f64>,
    pub per_run: Vec<f64>,
    pub quantities: Vec<Quantity>,
    /// Finite thresholds of the schedule; the final stratum is open-ended.
    pub levels: Vec<f64>,
    pub seed: u64,
    pub samples: usize,
    pub burn_in: usize,
    pub rho: f64,
    pub replications: usize,
    pub mode: Mode,
    pub wall_time: f64,
}

pub fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Decimal rendering with the sentinels spelled `inf` / `-inf`.
pub fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const STRATA_HEADER: &str = "t,gamma,size_X,size_Z,R_hat,P_hat,H_hat,C_hat";

/// Per-stratum means over all runs (which share one schedule). `H_hat` is
/// averaged over the runs whose stratum was non-empty.
pub fn strata_csv(runs: &[SsaRun]) -> String {
    let mut out = String::from(STRATA_HEADER);
    out.push('\n');
    let Some(first) = runs.first() else {
        return out;
    };
    let r = runs.len() as f64;
    for (i, s) in first.strata.iter().enumerate() {
        let col = |f: &dyn Fn(&SsaRun) -> f64| runs.iter().map(f).sum::<f64>() / r;
        let live: Vec<f64> = runs
            .iter()
            .map(|run| &run.strata[i])
            .filter(|s| !s.degenerate)
            .map(|s| s.h_hat)
            .collect();
        let h = if live.is_empty() {
            0.0
        } else {
            live.iter().sum::<f64>() / live.len() as f64
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.t,
            num(s.gamma),
            num(col(&|run| run.strata[i].size_x as f64)),
            num(col(&|run| run.strata[i].size_z as f64)),
            num(col(&|run| run.strata[i].r_hat)),
            num(col(&|run| run.strata[i].p_hat)),
            num(h),
            num(col(&|run| run.strata[i].c_hat)),
        );
    }
    out
}

pub const SERIES_HEADER: &str = "n,c_hat,re,pe_vs_oracle,mu_hat,delta_hat";

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub n: usize,
    pub c_hat: f64,
    pub re: Option<f64>,
    pub pe_vs_oracle: Option<f64>,
    pub mu_hat: Option<f64>,
    pub delta_hat: Option<f64>,
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.n,
            num(row.c_hat),
            opt(row.re),
            opt(row.pe_vs_oracle),
            opt(row.mu_hat),
            opt(row.delta_hat)
        );
    }
    out
}
