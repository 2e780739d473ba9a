//! `ssa`: command-line front end of the stratified splitting estimators.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 configuration error,
//! 3 degenerate run (partial output written), 4 oracle refused.

mod bounds_cmd;
mod config;
mod error;
mod oracle_cmd;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::bounds_cmd::BoundsArgs;
use crate::config::{Environment, Overrides, Resolved};
use crate::error::Failure;

#[derive(Debug, Parser)]
#[command(name = "ssa", version, about = "Stratified splitting for rare-event estimation and counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a schedule (pilot run, model levels or --levels file) and run
    /// the replications
    Run(ConfigArgs),
    /// Run only the adaptive pilot and write the schedule it found
    Pilot(ConfigArgs),
    /// Print the sample-size plan for an (epsilon, delta) target
    Bounds(BoundsArgs),
    /// Compute reference values for the configured model
    Oracle {
        #[command(flatten)]
        args: ConfigArgs,
        /// Use the eightfold lattice symmetry in the walk enumeration
        #[arg(long)]
        symmetric: bool,
    },
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Resolved, Failure> {
        let env = Environment::from_process()?;
        let resolved = config::resolve(config::load(&self.config)?, &env, &self.overrides)?;
        if let Some(k) = resolved.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| Failure::Config(format!("cannot start {k} worker threads: {e}")))?;
        }
        Ok(resolved)
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args.resolve()?),
        Command::Pilot(args) => run::cmd_pilot(&args.resolve()?),
        Command::Bounds(args) => bounds_cmd::cmd_bounds(&args),
        Command::Oracle { args, symmetric } => oracle_cmd::cmd_oracle(&args.resolve()?, symmetric),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<Failure>().map_or(1, Failure::exit_code);
            ExitCode::from(code)
        }
    }
}
