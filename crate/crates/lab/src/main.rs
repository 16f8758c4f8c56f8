use clap::{Parser, Subcommand};
use smallbody_lab::commands::{run_command, Command};
use smallbody_lab::config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 1 configuration error, 2 aborted run, 3 other failure.
#[derive(Parser)]
#[command(name = "smallbody-lab", version, about = "Small rigid body in a 2D perfect fluid: simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Boundary, potential and tensor identities for the configured and reference bodies.
    CheckIdentities,
    /// Kirchhoff potentials, harmonic field and mass coefficients of the configured body.
    Potentials,
    /// Coupled body-fluid runs, one per ε.
    SimulateCoupled,
    /// The point-vortex limit system.
    SimulateLimit,
    /// Coupled runs, limit run and their comparison.
    Converge,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn }).init();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("cannot set up {k} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let Some(path) = cli.config else {
        eprintln!("--config PATH is required");
        return ExitCode::from(1);
    };
    let cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.out.unwrap_or_else(|| cfg.run.out_dir.clone());
    let cmd = match cli.command {
        Sub::CheckIdentities => Command::CheckIdentities,
        Sub::Potentials => Command::Potentials,
        Sub::SimulateCoupled => Command::SimulateCoupled,
        Sub::SimulateLimit => Command::SimulateLimit,
        Sub::Converge => Command::Converge,
    };
    match run_command(cmd, &cfg, &out) {
        Ok(o) => {
            if cmd == Command::CheckIdentities && !o.checks_pass {
                eprintln!("some identity rows failed; see identities.json");
            }
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 3 })
        }
    }
}
