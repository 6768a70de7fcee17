use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, warn};
use pfsi_cli::commands::{
    cmd_basis, cmd_dissipativity, cmd_energy_audit, cmd_pullback, cmd_simulate, cmd_validate, Outcome,
};
use pfsi_cli::config::RunConfig;
use pfsi_cli::output::{write_manifest, write_metadata};
use pfsi_cli::{exit, CliError};

#[derive(Parser)]
#[command(name = "pfsi", version, about = "Fluid-plate process simulator and pullback experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Build or verify the operator and basis cache.
    Basis(Flags),
    /// Integrate one trajectory and write it as CSV.
    Simulate(Flags),
    /// Energy balance residual, with a dt/2 refinement.
    EnergyAudit(Flags),
    /// Lyapunov sweep and absorbing-ball fits.
    Dissipativity(Flags),
    /// Attraction curve, sampled omega-limit and covering numbers.
    Pullback(Flags),
    /// Run the assumption samplers on the configured profiles.
    ValidateAssumptions(Flags),
}

#[derive(clap::Args, Clone)]
struct Flags {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble runs (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// RNG seed; overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, flags) = match &cli.command {
        Command::Basis(f) => ("basis", f),
        Command::Simulate(f) => ("simulate", f),
        Command::EnergyAudit(f) => ("energy-audit", f),
        Command::Dissipativity(f) => ("dissipativity", f),
        Command::Pullback(f) => ("pullback", f),
        Command::ValidateAssumptions(f) => ("validate-assumptions", f),
    };
    match run(name, &cli.command, flags) {
        Ok(outcome) if outcome.censored => {
            warn!("{name}: fit censored or incomplete");
            ExitCode::from(exit::CENSORED as u8)
        }
        Ok(_) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("pfsi {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(name: &str, command: &Command, flags: &Flags) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut cfg = RunConfig::load(&flags.config)?;
    if let Some(out) = &flags.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    let workers = match flags.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::create_dir_all(&cfg.out)?;
    let out = cfg.out.clone();
    let outcome = match command {
        Command::Basis(_) => cmd_basis(&cfg, &out),
        Command::Simulate(_) => cmd_simulate(&cfg, &out),
        Command::EnergyAudit(_) => cmd_energy_audit(&cfg, &out),
        Command::Dissipativity(_) => cmd_dissipativity(&cfg, &out),
        Command::Pullback(_) => cmd_pullback(&cfg, &out),
        Command::ValidateAssumptions(_) => cmd_validate(&cfg, &out),
    }?;
    write_manifest(&out, name, &cfg, outcome.cache_sha256.as_deref())?;
    write_metadata(&out, name, start.elapsed().as_secs_f64(), workers)?;
    Ok(outcome)
}
