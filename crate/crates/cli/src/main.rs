use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = pitlane_cli::Cli::parse();
    match pitlane_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
