use std::process::ExitCode;

use clap::Parser;
use realuid::cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match realuid::commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
