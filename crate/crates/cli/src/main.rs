mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Command;
use config::ExperimentConfig;
use output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] hopf_cl::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(hopf_cl::Error::Precondition(_)) => 3,
            _ => 1,
        }
    }
}

/// Experiments for reaction-diffusion systems coupled to a conservation law.
///
/// Exit status: 0 success, 1 runtime error, 2 configuration error,
/// 3 experiment assertion failed.
#[derive(Debug, Parser)]
#[command(name = "hopf-cl", version)]
struct Cli {
    /// Subcommand; may also be given with --subcommand.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long = "subcommand", value_enum)]
    subcommand: Option<Command>,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent jobs.
    #[arg(long)]
    workers: Option<usize>,
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let cmd = match (cli.command, cli.subcommand) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!("conflicting subcommands {} and {}", a.name(), b.name())))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(CliError::Config("no subcommand given".into())),
    };
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        // fails only if a pool exists already, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = Output::create(&cli.out)?;
    let outcome = commands::run(cmd, &cfg, &mut out)?;
    out.json("summary.json", &outcome.summary)?;
    out.finish(&cmd.name(), &resolved, cfg.seed)?;
    println!("{}", serde_json::to_string(&outcome.summary)?);
    match outcome.passed {
        Some(false) => {
            eprintln!("{}: assertion failed", cmd.name());
            Ok(false)
        }
        _ => Ok(true),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
