//! Experiment runner behind the `sublearn` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod report;

use config::Config;
use report::Artifact;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sublearn::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sublearn",
    version,
    about = "Subjectivity learning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a multi-label dataset.
    Gen,
    /// Fit ERM or EGRM to a dataset.
    Fit,
    /// Compare ERM and EGRM infima against the confusion error.
    Gap,
    /// Coupled (m, l) sample-size schedule.
    Schedule,
    /// Annealed entropies and brute-force dimensions.
    Capacity,
    /// Solve the uniform-convergence bound for eps.
    Bounds,
    /// Monte Carlo checks along a schedule.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Fit => "fit",
            Command::Gap => "gap",
            Command::Schedule => "schedule",
            Command::Capacity => "capacity",
            Command::Bounds => "bounds",
            Command::Verify => "verify",
        }
    }
}

/// Settings after applying flags over file values.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

pub fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(CliError::Config("jobs: must be at least 1".into()));
    }
    Ok(Resolved {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        jobs,
        config,
    })
}

/// What a subcommand produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    /// A checked property failed; artifacts are still written.
    pub violation: bool,
}

/// Runs `command` on a worker pool capped at `jobs` threads.
pub fn execute(command: Command, resolved: &Resolved) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = resolved.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("jobs: {e}")))?;
    pool.install(|| commands::run(command, &resolved.config, resolved.seed))
}

pub fn write_artifacts(out: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    for a in artifacts {
        std::fs::write(out.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// Full run: resolve, execute, write. Returns the process exit code.
pub fn main_with(cli: &Cli) -> u8 {
    let result = resolve(cli).and_then(|r| {
        let outcome = execute(cli.command, &r)?;
        write_artifacts(&r.out, &outcome.artifacts)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.violation {
                eprintln!("{}: property violation", cli.command.name());
                3
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
