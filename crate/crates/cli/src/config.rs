//! Experiment configuration: the JSON schema, environment and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssa_core::engine::{Mode, RunConfig};
use ssa_core::models::credit::PortfolioSpec;
use ssa_core::models::wcm::WcmInstance;

use crate::error::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wcm,
    Credit,
    Saw,
}

/// Where the level schedule of `run` comes from when no levels file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSource {
    /// The model's own levels (component model and walks).
    Model,
    /// An adaptive pilot run.
    Pilot,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelKind>,
    pub wcm: Option<WcmSection>,
    pub credit: Option<CreditSection>,
    pub saw: Option<SawSection>,
    #[serde(default)]
    pub run: RunSection,
    pub schedule: Option<ScheduleSource>,
    #[serde(default)]
    pub mandatory_levels: Vec<f64>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcmSection {
    #[serde(flatten)]
    pub instance: WcmInstance,
    /// Also estimate `E[S | S <= gamma]`.
    #[serde(default)]
    pub condexp: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditSection {
    pub portfolio: PortfolioSpec,
    /// Value-at-risk levels, ascending.
    pub vars: Vec<f64>,
    /// Sample size of the plain Monte Carlo oracle.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: u64,
}

fn default_oracle_samples() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Lengths {
    One(usize),
    Many(Vec<usize>),
}

impl Lengths {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Lengths::One(n) => vec![*n],
            Lengths::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SawSection {
    pub n: Lengths,
    /// Keep adding batches of `run.replications` runs until the relative
    /// error of the count reaches this value.
    pub re_target: Option<f64>,
    #[serde(default = "default_max_replications")]
    pub max_replications: usize,
}

fn default_max_replications() -> usize {
    10_000
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub samples: Option<usize>,
    pub burn_in: Option<usize>,
    pub rho: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub pool_pilot: Option<bool>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// Values given on the command line; they win over the environment, which
/// wins over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Model section of the config to use
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Particles per level
    #[arg(long)]
    pub samples: Option<usize>,
    /// Rarity parameter of the pilot run
    #[arg(long)]
    pub rho: Option<f64>,
    /// Kernel steps between retained samples
    #[arg(long = "burnin")]
    pub burn_in: Option<usize>,
    /// Independent replications
    #[arg(long = "reps")]
    pub replications: Option<usize>,
    /// Root seed (env SSA_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with the level thresholds to use instead of a pilot run
    #[arg(long)]
    pub levels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// JSON output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV output path
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads (env SSA_THREADS); results do not depend on it
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Ssa,
    Issa,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ssa => Mode::Ssa,
            ModeArg::Issa => Mode::Issa,
        }
    }
}

/// Environment values read once at start-up.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Environment {
    pub fn from_process() -> Result<Self, Failure> {
        Ok(Self {
            seed: parse_env("SSA_SEED")?,
            threads: parse_env("SSA_THREADS")?,
        })
    }
}

fn parse_env<T: std::str::FromStr>(name: &str) -> Result<Option<T>, Failure> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{name}={v:?} is not a valid value"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::Config(format!("{name}: {e}"))),
    }
}

/// A config with every override applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelKind,
    pub config: ExperimentConfig,
    pub run: RunConfig,
    pub threads: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Resolved {
    pub fn wcm(&self) -> Result<&WcmSection, Failure> {
        self.config.wcm.as_ref().ok_or_else(|| missing("wcm"))
    }

    pub fn credit(&self) -> Result<&CreditSection, Failure> {
        self.config.credit.as_ref().ok_or_else(|| missing("credit"))
    }

    pub fn saw(&self) -> Result<&SawSection, Failure> {
        self.config.saw.as_ref().ok_or_else(|| missing("saw"))
    }

    pub fn schedule_source(&self) -> ScheduleSource {
        self.config.schedule.unwrap_or(match self.model {
            ModelKind::Credit => ScheduleSource::Pilot,
            ModelKind::Wcm | ModelKind::Saw => ScheduleSource::Model,
        })
    }
}

fn missing(section: &str) -> Failure {
    Failure::Config(format!("the config has no \"{section}\" section"))
}

pub fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Levels file: either a bare array or `{"levels": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsFile {
    Bare(Vec<f64>),
    Object(LevelsObject),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsObject {
    pub levels: Vec<f64>,
}

pub fn load_levels(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: LevelsFile =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(match file {
        LevelsFile::Bare(v) => v,
        LevelsFile::Object(o) => o.levels,
    })
}

pub fn resolve(config: ExperimentConfig, env: &Environment, flags: &Overrides) -> Result<Resolved, Failure> {
    let model = flags
        .model
        .or(config.model)
        .ok_or_else(|| Failure::Config("no model selected (set \"model\" or pass --model)".into()))?;
    let defaults = RunConfig::default();
    let section = &config.run;
    let run = RunConfig {
        samples: flags.samples.or(section.samples).unwrap_or(defaults.samples),
        burn_in: flags.burn_in.or(section.burn_in).unwrap_or(defaults.burn_in),
        rho: flags.rho.or(section.rho).unwrap_or(defaults.rho),
        replications: flags
            .replications
            .or(section.replications)
            .unwrap_or(defaults.replications),
        seed: flags.seed.or(env.seed).or(section.seed).unwrap_or(defaults.seed),
        mode: flags.mode.map(Mode::from).or(section.mode).unwrap_or(defaults.mode),
        pool_pilot: section.pool_pilot.unwrap_or(defaults.pool_pilot),
    };
    run.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let threads = flags.threads.or(env.threads).or(section.threads);
    if threads == Some(0) {
        return Err(Failure::Config("threads must be at least 1".into()));
    }
    let levels = flags.levels.as_deref().map(load_levels).transpose()?;
    Ok(Resolved {
        model,
        json: flags.out.clone().or_else(|| config.outputs.json.clone()),
        csv: flags.csv.clone().or_else(|| config.outputs.csv.clone()),
        config,
        run,
        threads,
        levels,
    })
}
