//! `delaykit` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 parse error, 3 validation
//! error, 4 inadmissible delay, 5 integration failure, 6 continuation step
//! underflow.

mod args;
mod branch_file;
mod commands;
mod failure;
mod output;
mod setup;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::{CliResult, VALIDATION};

fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Compile(a) => commands::compile(cli, a),
        Command::Simulate(a) => commands::simulate(cli, a),
        Command::EqContinue(a) => commands::eq_continue(cli, a),
        Command::LcContinue(a) => commands::lc_continue(cli, a),
        Command::Lyap(a) => commands::lyap(cli, a),
        Command::LyapSweep(a) => commands::lyap_sweep(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are validation errors; help and version are not errors
            let code = if e.use_stderr() { VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("delaykit: {} failed: {:#}", f.stage, f.error);
            ExitCode::from(f.code)
        }
    }
}
