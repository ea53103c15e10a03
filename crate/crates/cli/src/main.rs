// SPDX-License-Identifier: MIT OR Apache-2.0

//! `relfts`: relevant hypothesis tests for functional time series from CSV.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

/// Exit status for every failure.
const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(outcome)) => ExitCode::from(outcome.code()),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
        // the panic message is already on stderr
        Err(_) => ExitCode::from(EXIT_ERROR),
    }
}
