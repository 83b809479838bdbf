//! Command-line front end: configured runs, the two experiment presets, and
//! a metrics report over sample logs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod experiment;
pub mod output;
pub mod report;
pub mod run;

pub use config::RunConfigFile;
pub use output::{Format, SampleRow};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CUTEXPLORE_OUTPUT_DIR";
/// Used when neither flag, environment nor config names a directory.
pub const DEFAULT_OUTPUT_DIR: &str = "cutexplore-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, arguments or input files (exit 2).
    #[error("{0}")]
    Config(String),
    /// Anything that went wrong while running (exit 1).
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Converts a library error, keeping configuration problems apart.
pub(crate) fn lib_error(e: cutexplore::Error) -> CliError {
    match e {
        cutexplore::Error::InvalidConfig { .. } => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "cutexplore", version, about = "Design-space exploration with random cut forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explore from a TOML config.
    Run(run::RunArgs),
    /// Run a preset experiment.
    #[command(subcommand)]
    Experiment(experiment::ExperimentCommand),
    /// Summarize a sample log.
    Report(report::ReportArgs),
}

/// Flags shared by `run` and the experiments.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; falls back to the environment, then the config.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Sample log format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl CommonArgs {
    pub(crate) fn resolve_dir(&self, configured: Option<&PathBuf>) -> PathBuf {
        self.output_dir.clone().or_else(|| configured.cloned()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args).map(|outcome| println!("{}", outcome.summary.describe())),
        Command::Experiment(cmd) => experiment::cmd_experiment(&cmd),
        Command::Report(args) => report::cmd_report(&args),
    }
}
