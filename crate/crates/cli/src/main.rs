//! `disparity-audit`: audit a dataset for subgroups with disparate
//! outcomes, generate the synthetic benchmark data, and score locators.

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use disparity_cli::args::Cli;

fn main() -> ExitCode {
    let version: &'static str = Box::leak(disparity_cli::version_string().into_boxed_str());
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match disparity_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code, e.message);
            ExitCode::from(1)
        }
    }
}
