use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fbp", about = "Free boundary solver and N-BBM particle simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the free boundary problem and write boundary, snapshots and report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the particle system, optionally comparing with a solve output directory.
    Particles {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pde: Option<PathBuf>,
    },
    /// Tabulate the closed-form traveling wave of speed c.
    Wave {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { config, out } => fbp_cli::run_solve(config, out),
        Command::Particles { config, out, pde } => fbp_cli::run_particles(config, out, pde.as_deref()),
        Command::Wave { c, out } => fbp_cli::run_wave(*c, out),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fbp: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
