use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coexfim::cli::{cmd_fixtures, cmd_replay, cmd_run, fixture_table, EXIT_INVALID, EXIT_MISMATCH};

#[derive(Parser)]
#[command(name = "coexfim", version, about = "ZigBee coexistence simulator and interferer fingerprinting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario file and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed given in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in fixture suite and compare against expectations.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        /// Runs every fixture under this seed instead of its own.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run classification over a recorded trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out).map(|r| {
            print!("{}", r.summary());
            true
        }),
        Command::Replay { trace, out } => cmd_replay(&trace, &out).map(|r| {
            print!("{}", r.summary());
            true
        }),
        Command::Fixtures { out, seed } => cmd_fixtures(&out, seed).map(|results| {
            print!("{}", fixture_table(&results));
            results.iter().all(|r| r.pass())
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_MISMATCH as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID as u8)
        }
    }
}
