#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{RunDir, Status};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical fault: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(e: spikefield::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

// Faults raised while a run is underway; bad inputs count as configuration errors.
impl From<spikefield::Error> for CliError {
    fn from(e: spikefield::Error) -> Self {
        match e {
            spikefield::Error::NumericalBlowUp { .. } | spikefield::Error::RangeTooSmall { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "spikefield", version, about = "Integrate-and-fire networks with cable transmission and their mean-field limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config, or a run manifest to reproduce. Defaults to the built-in benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism. Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite an existing run directory.
    #[arg(long, global = true)]
    force: bool,
    /// Override a config entry, e.g. `--set grid.n_steps=400`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Exit with status 4 when the solver does not converge.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check the model assumptions on a probe grid.
    Validate,
    /// Tabulate the transmission kernel.
    Kernel,
    /// Simulate the network.
    Simulate,
    /// Solve for the limit spike rate.
    Solve,
    /// First-passage density curves with a crossing-estimator cross-check.
    Density,
    /// Network-to-limit convergence study.
    Study,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Kernel => "kernel",
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::Density => "density",
            Command::Study => "study",
        }
    }
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {w} workers: {e}")))?;
    }
    let mut dir = RunDir::prepare(PathBuf::from(&cfg.output).as_path(), cli.force)?;
    let (status, summary) = match cli.command {
        Command::Validate => commands::validate(&cfg, &mut dir),
        Command::Kernel => commands::kernel(&cfg, &mut dir),
        Command::Simulate => commands::simulate(&cfg, &mut dir),
        Command::Solve => commands::solve(&cfg, &mut dir),
        Command::Density => commands::density(&cfg, &mut dir),
        Command::Study => commands::study(&cfg, &mut dir),
    }?;
    dir.finish(&cfg, cli.command.name(), summary)?;
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(2),
        Ok(Status::NotConverged) => {
            eprintln!("warning: solver did not converge");
            ExitCode::from(if cli.strict { 4 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
