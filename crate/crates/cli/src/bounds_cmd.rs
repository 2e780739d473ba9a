//! `ssa bounds`: per-level sample-size plan.

use std::fmt::Write as _;
use std::path::PathBuf;

use ssa_core::bounds::{
    chernoff_m, chernoff_real, chernoff_tv, epsdelta_samplesizes, min_x_real, min_z_real, ApproximationTarget,
};

use crate::error::Failure;
use crate::output::{self, num};

#[derive(Debug, Clone, clap::Args)]
pub struct BoundsArgs {
    /// Relative accuracy
    #[arg(long)]
    pub epsilon: f64,
    /// Failure probability
    #[arg(long)]
    pub delta: f64,
    /// Number of levels
    #[arg(long)]
    pub n: usize,
    /// Lower bound on min(r_t, 1 - r_t), shared by all levels
    #[arg(long = "r-lower")]
    pub r_lower: f64,
    /// Integrand minimum on every stratum
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Integrand maximum on every stratum
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// The integrand is an indicator; with a single level a plain Chernoff
    /// plan for the probability is added for comparison
    #[arg(long)]
    pub binary: bool,
    /// CSV output path (default: stdout)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub const BOUNDS_HEADER: &str = "method,t,tv_x,min_x,min_x_raw,tv_z,min_z,min_z_raw";

/// `min_x` and `min_z` are the ceilings of the `_raw` columns.
pub fn bounds_table(args: &BoundsArgs) -> Result<String, Failure> {
    let target = ApproximationTarget {
        epsilon: args.epsilon,
        delta: args.delta,
        r_lower: vec![args.r_lower; args.n],
        a: vec![args.a; args.n],
        b: vec![args.b; args.n],
    };
    let plan = epsdelta_samplesizes(&target).map_err(|e| Failure::Config(e.to_string()))?;
    let x_raw = min_x_real(args.n, args.r_lower, args.epsilon, args.delta);
    let z_raw = min_z_real(args.n, args.a, args.b, args.epsilon, args.delta);
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for level in &plan {
        let _ = writeln!(
            out,
            "plan,{},{},{},{},{},{},{}",
            level.t,
            num(level.tv_x),
            level.min_x,
            num(x_raw),
            num(level.tv_z),
            level.min_z,
            num(z_raw)
        );
    }
    if args.binary && args.n == 1 {
        let m = chernoff_m(args.r_lower, args.epsilon, args.delta).map_err(|e| Failure::Config(e.to_string()))?;
        let _ = writeln!(
            out,
            "chernoff,1,{},{m},{},,,",
            num(chernoff_tv(args.r_lower, args.epsilon)),
            num(chernoff_real(args.r_lower, args.epsilon, args.delta))
        );
    }
    Ok(out)
}

pub fn cmd_bounds(args: &BoundsArgs) -> anyhow::Result<()> {
    let table = bounds_table(args)?;
    output::write_text(args.csv.as_deref(), &table)
}
