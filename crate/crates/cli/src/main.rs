//! `ascca`: single solves, cross-validation and simulation sweeps.
//!
//! Exit codes: 0 on success, 1 for numerical failures, 2 for bad input or
//! configuration.

mod args;
mod commands;

use args::Cli;
use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
