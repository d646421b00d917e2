use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpkit_cli::commands;
use gpkit_cli::config::ExperimentConfig;
use gpkit_cli::error::{CliError, Result};

/// GP model fitting and experiment harness: joint real/simulated GPs,
/// latent force models, and active emulation of costly simulators.
#[derive(Parser)]
#[command(name = "gpkit", version, about)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the first seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; defaults to the config's out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// External oracle command for `emulate` (line-per-query protocol).
    #[arg(long, global = true)]
    oracle_cmd: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a standard GP to a regression CSV.
    FitGp,
    /// Fit a joint GP to a tagged real/simulated CSV.
    FitJgp,
    /// Fit a multi-output latent force model to a series CSV.
    FitLfm,
    /// Run the active emulation loop against an oracle.
    Emulate,
    /// Compare emulation node-selection schemes over many seeds.
    BenchEmulation,
    /// Same-site or cross-site GP/JGP comparison on synthetic campaigns.
    BenchJgp,
    /// Compute MSE/RMSE/NMSE metrics from a predictions CSV.
    Eval,
}

fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <path> is required"))?;
    let config = ExperimentConfig::load(config_path)?;

    let mut seeds = config.seeds.clone();
    if let Some(s) = cli.seed {
        seeds[0] = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.out_dir.clone());

    match cli.command {
        Command::FitGp => commands::fit_gp(&config, &out),
        Command::FitJgp => commands::fit_jgp(&config, &out),
        Command::FitLfm => commands::fit_lfm_cmd(&config, &seeds, &out),
        Command::Emulate => commands::emulate(&config, &seeds, &out, cli.oracle_cmd.as_deref()),
        Command::BenchEmulation => commands::bench_emulation(&config, &seeds, &out),
        Command::BenchJgp => commands::bench_jgp(&config, &seeds, &out),
        Command::Eval => commands::eval(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
