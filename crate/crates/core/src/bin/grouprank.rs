use std::process::ExitCode;

use clap::Parser;
use grouprank::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grouprank: {e}");
            ExitCode::from(2)
        }
    }
}
