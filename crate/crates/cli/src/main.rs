use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polsr::Protocol;

mod commands;

#[derive(Parser)]
#[command(name = "polsr", version, about = "Simulate OLSR and P-OLSR on UAV ad-hoc networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its effective configuration.
    Validate { file: PathBuf },
    /// Run one seed (or a campaign with --reps) and write result files.
    Run {
        /// Scenario file or preset name.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Run this many consecutive seeds and write a campaign summary.
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long, env = "POLSR_OUT_DIR", default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Run campaigns over a parameter grid and write a summary table.
    Sweep {
        /// Scenario file or preset name.
        scenario: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        hi: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4])]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2])]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.08])]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [Protocol::Olsr, Protocol::Polsr])]
        protocols: Vec<Protocol>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "POLSR_OUT_DIR", default_value = "results")]
        out: PathBuf,
    },
    /// List the built-in scenarios or print one as JSON.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show {
        name: String,
        #[arg(long, default_value_t = Protocol::Olsr)]
        protocol: Protocol,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { file } => commands::validate(&file),
        Command::Run { scenario, seed, reps, out, protocol } => commands::run(&scenario, protocol, seed, reps, &out),
        Command::Sweep { scenario, hi, alpha, beta, gamma, protocols, reps, seed, out } => {
            let grid = commands::Grid { hi, alpha, beta, gamma, protocols };
            commands::sweep(&scenario, &grid, reps, seed, &out)
        }
        Command::Presets { action: PresetAction::List } => commands::presets_list(),
        Command::Presets { action: PresetAction::Show { name, protocol } } => commands::presets_show(&name, protocol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

