use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(hrsim::cli::run(hrsim::cli::Cli::parse()))
}
