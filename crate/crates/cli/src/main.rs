//! `cnl` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 degenerate split,
//! 4 numerical abort, 5 missing or unreadable files.

mod args;
mod commands;
mod config;
mod failure;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::Failure;

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Split(args) => commands::split(&config::resolve(&args)?),
        Command::Train(args) => commands::train(&config::resolve(&args)?),
        Command::Analyze { run, checkpoint } => commands::analyze(&config::resolve(&run)?, checkpoint.as_deref()),
        Command::Curves { run_dir, out } => commands::curves(&run_dir, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("cnl: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
