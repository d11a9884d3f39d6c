use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use pdmp_cli::{execute, output_dir, parse_config, Subcommand};

/// Simulators, mean-field solver and convergence experiments for stochastic
/// ion channels on a circle.
#[derive(Parser)]
#[command(name = "pdmp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Overrides `io.out_dir` and `PDMP_OUT_DIR`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match try_main() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<usize> {
    let cli = Cli::parse();
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()))?;
    let mut config = parse_config(&text).with_context(|| format!("in {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let env = std::env::var_os("PDMP_OUT_DIR").map(PathBuf::from);
    config.io.out_dir = output_dir(cli.out, env, &config.io.out_dir);
    config.resolve(cli.command)?;
    let outcome = execute(&config, cli.workers)?;
    println!("{}", outcome.summary);
    Ok(outcome.violations)
}
