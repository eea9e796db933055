//! Command-line driver: simulations, weak-error experiments, generator
//! diagnostics, and property-check suites, all bound to strict JSON
//! configs.
//!
//! Exit status: 0 on success, 1 when a checked property fails, 2 on usage
//! or configuration errors.

pub mod config;
pub mod run;

use clap::{Parser, Subcommand};
use config::{RunConfig, SuiteRunConfig};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration, argument, or runtime-environment problems: exit 2.
    #[error("{0}")]
    Usage(String),
    /// A checked numerical property failed: exit 1.
    #[error("{0}")]
    Property(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Property(_) => 1,
        }
    }
}

/// Mean-field jump-diffusion laboratory: particle and limit simulators,
/// generator diagnostics, and property-check suites.
#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed override; takes precedence over the config document.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results are thread-count invariant.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for CSV/JSON files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the N-particle jump system and dump statistic snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the limit process cloud and dump statistic snapshots.
    SimulateLimit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Measure the weak-error decay of one statistic over an N ladder.
    Rate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Measure the weak error of a multi-time product observable.
    Multitime {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the limit (and optionally N-particle) generator at a measure.
    GenEval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the generator gap over particle counts at a fixed measure.
    GenDiff {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check the martingale identity of a generator by simulation.
    Dynkin {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the semigroup difference against its generator-gap integral.
    Trotter {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a batch property-check suite.
    Suite {
        /// Suite name: derivative, taylor, metric, generator, or dynkin.
        name: String,
        /// Optional config document (same schema as `command: suite`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Randomized instances per check family.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Parse and validate a config document without running it.
    ValidateConfig { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.threads > 0 {
        pool = pool.num_threads(cli.threads);
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: cannot configure {} threads: {e}", cli.threads);
        return ExitCode::from(2);
    }

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { config }
        | Command::SimulateLimit { config }
        | Command::Rate { config }
        | Command::Multitime { config }
        | Command::GenEval { config }
        | Command::GenDiff { config }
        | Command::Dynkin { config }
        | Command::Trotter { config } => {
            let mut loaded = RunConfig::load(config)?;
            expect_command(&loaded, subcommand_name(&cli.command))?;
            loaded.apply_seed_override(cli.seed);
            run::execute(&loaded, &cli.out)
        }
        Command::Suite {
            name,
            config,
            instances,
        } => {
            let mut suite_config = match config {
                Some(path) => match RunConfig::load(path)? {
                    RunConfig::Suite(c) => c,
                    other => {
                        return Err(CliError::Usage(format!(
                            "{} holds a `{}` config, expected `suite`",
                            path.display(),
                            other.command_name()
                        )))
                    }
                },
                None => SuiteRunConfig {
                    name: name.clone(),
                    seed: None,
                    instances: None,
                },
            };
            if suite_config.name != *name {
                return Err(CliError::Usage(format!(
                    "suite `{name}` requested but config names `{}`",
                    suite_config.name
                )));
            }
            if let Some(n) = instances {
                suite_config.instances = Some(*n);
            }
            let mut loaded = RunConfig::Suite(suite_config);
            loaded.validate()?;
            loaded.apply_seed_override(cli.seed);
            run::execute(&loaded, &cli.out)
        }
        Command::ValidateConfig { path } => {
            let loaded = RunConfig::load(path)?;
            println!(
                "ok: {} is a valid `{}` config",
                path.display(),
                loaded.command_name()
            );
            Ok(())
        }
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Simulate { .. } => "simulate",
        Command::SimulateLimit { .. } => "simulate-limit",
        Command::Rate { .. } => "rate",
        Command::Multitime { .. } => "multitime",
        Command::GenEval { .. } => "gen-eval",
        Command::GenDiff { .. } => "gen-diff",
        Command::Dynkin { .. } => "dynkin",
        Command::Trotter { .. } => "trotter",
        Command::Suite { .. } => "suite",
        Command::ValidateConfig { .. } => "validate-config",
    }
}

fn expect_command(config: &RunConfig, subcommand: &str) -> Result<(), CliError> {
    if config.command_name() != subcommand {
        return Err(CliError::Usage(format!(
            "config document is for `{}` but the `{subcommand}` subcommand was invoked",
            config.command_name()
        )));
    }
    Ok(())
}
