use std::process::ExitCode;

use clap::Parser;
use imser_cli::args::Cli;

fn main() -> ExitCode {
    ExitCode::from(imser_cli::run(Cli::parse()))
}
