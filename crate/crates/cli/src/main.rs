//! `roew`: generate noisy two-qubit datasets, train robust entanglement
//! witnesses, sweep α × split, and verify witness files.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CommonArgs;
use error::CliResult;

#[derive(Parser, Debug)]
#[command(
    name = "roew",
    version,
    about = "Robust entanglement witnesses from noisy Pauli measurements"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labeled states and their measured feature moments.
    Gen,
    /// Train one witness per Bell group, verify each, and score the test split.
    Train,
    /// Evaluate every (alpha, split) cell and write the metric table.
    Sweep {
        /// Generate the dataset into --out first.
        #[arg(long)]
        gen: bool,
    },
    /// Check a witness file: spectrum, product-state grid, Bell expectations.
    Verify { file: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    let (cfg, rt) = config::resolve(&cli.common)?;
    match cli.command {
        Command::Gen => commands::gen(&cfg, &rt),
        Command::Train => commands::train(&cfg, &rt),
        Command::Sweep { gen } => commands::sweep(&cfg, &rt, gen),
        Command::Verify { file } => commands::verify(&cfg, &file, cli.common.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
