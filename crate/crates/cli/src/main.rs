mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failures, each with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration or input (exit 1).
    Config(String),
    /// Numerical non-convergence (exit 2).
    Numerical(String),
    /// Grid too coarse for the requested analysis (exit 3).
    Resolution(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Resolution(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Resolution(m) => m,
        }
    }
}

impl From<fbound::Error> for CliError {
    fn from(e: fbound::Error) -> Self {
        use fbound::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidGrid(_) | E::InvalidParameter(_) | E::Parse(_) | E::Io(_) => CliError::Config(msg),
            E::Resolution(_) | E::InvalidFrame { .. } | E::OutsideDomain { .. } => CliError::Resolution(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fbound", version, about = "Solve and analyse free-boundary minimizers of |grad u|^2 + 2|u|")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random frame placement.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize with the configured boundary data; writes field.csv and manifest.json.
    Solve(Common),
    /// Extract and classify the free boundary of a solved field.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Field file (default: <out>/field.csv).
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Almost-minimality gauge and epiperimetric sweep.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Prints beta_n/2, the energy of a half-space solution.
    Beta {
        /// Dimension (ignored when --config is given).
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn set_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(c) => {
            set_jobs(c.jobs)?;
            commands::solve(&c)
        }
        Command::Analyze { common, field } => {
            set_jobs(common.jobs)?;
            commands::analyze(&common, field)
        }
        Command::Verify { common, field } => {
            set_jobs(common.jobs)?;
            commands::verify(&common, field)
        }
        Command::Beta { n, config } => commands::beta(n, config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
