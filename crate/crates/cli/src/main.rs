//! `amfusion` command-line tool.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, invalid
//! settings), 2 on data errors (missing or malformed inputs).

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::ConfigError;

const USAGE: u8 = 1;
const DATA: u8 = 2;

fn exit_code(e: &amfusion::Error) -> u8 {
    match e {
        amfusion::Error::Config(_) | amfusion::Error::Weights(_) | amfusion::Error::EmptyGrid => USAGE,
        _ => DATA,
    }
}

fn run(argv: Vec<OsString>) -> u8 {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(ConfigError::MissingValue) => {
            eprintln!("error: --config needs a path");
            return USAGE;
        }
        Err(ConfigError::Read(path, e)) => {
            eprintln!("error: cannot read config {}: {e}", path.display());
            return DATA;
        }
        Err(ConfigError::Syntax(path, line, msg)) => {
            eprintln!("error: {}:{line}: {msg}", path.display());
            return USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => USAGE,
            };
        }
    };
    eprintln!("effective configuration: {:?}", cli.command);
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Decode(a) => commands::decode(a),
        Command::Rescore(a) => commands::rescore(a),
        Command::Tune(a) => commands::tune(a),
        Command::Score(a) => commands::score(a),
        Command::Buckets(a) => commands::buckets(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}
