use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = alca_cli::Cli::parse();
    match alca_cli::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
