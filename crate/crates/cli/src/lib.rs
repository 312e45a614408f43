//! Command-line front end: curve ingestion, configuration, the simulation
//! and prediction drivers, and CSV/JSON emission.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! non-convergence (outputs written so far are kept).

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult, EXIT_OK};

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = init_threads(cli.threads).and_then(|_| match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Register(a) => commands::register(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("efcp {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
