use chd::driver::{run_command, Command};
use clap::{Parser, Subcommand};
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

/// Cahn-Hilliard-Darcy simulation, gradient checks and optimal control.
#[derive(Parser)]
#[command(name = "chd", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward solve with field dumps and diagnostics.
    Simulate(Args),
    /// Finite-difference, duality and tangent-remainder checks.
    GradCheck(Args),
    /// Projected-gradient optimization of the control.
    Optimize(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::GradCheck(a) => (Command::GradCheck, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
    };
    let mut stdout = io::stdout().lock();
    match run_command(command, &args.config, args.out.as_deref(), args.seed, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
