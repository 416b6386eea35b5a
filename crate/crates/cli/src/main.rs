mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::Settings;
use crate::config::Config;
use crate::error::CliError;

/// Normal-approximation bounds, Stein-solution verification and CLT rate experiments.
#[derive(Debug, Parser)]
#[command(name = "stein-bounds", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the config value, then STEIN_BOUNDS_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Gauss–Legendre and Gauss–Hermite node count for Stein solutions.
    #[arg(long)]
    quadrature_order: Option<usize>,
}

fn env_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("STEIN_BOUNDS_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Config(format!(
                "STEIN_BOUNDS_THREADS must be a positive integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<commands::Outcome, CliError> {
    let config = Config::load(&cli.config)?;
    let threads = match cli.threads.or(config.threads) {
        Some(t) => Some(t),
        None => env_threads()?,
    };
    if threads == Some(0) {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    }
    let quadrature_order = cli.quadrature_order.or(config.quadrature_order);
    if quadrature_order == Some(0) {
        return Err(CliError::Config(
            "`quadrature_order` must be at least 1".into(),
        ));
    }
    let settings = Settings {
        out: cli.out.unwrap_or_else(|| config.output.dir.clone()),
        seed: cli.seed.or(config.seed).unwrap_or(0),
        threads,
        quadrature_order,
    };
    commands::run(&config, &settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            if outcome.failed_gates.is_empty() {
                ExitCode::SUCCESS
            } else {
                for gate in &outcome.failed_gates {
                    eprintln!("FAIL {gate}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("stein-bounds: {e}");
            e.exit_code()
        }
    }
}
