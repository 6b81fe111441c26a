//! Command implementations behind the `disparity-audit` binary.

pub mod args;
pub mod commands;
mod config;

use crate::args::{Cli, Command};
use crate::commands::CliError;

pub fn version_string() -> String {
    format!(
        "{} (engine {}, methodology {})",
        env!("CARGO_PKG_VERSION"),
        disparity_core::report::ENGINE_VERSION,
        disparity_core::report::methodology_hash()
    )
}

/// Dispatch a parsed command line. `--workers` configures the global pool.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::new("E_PARAMS", "--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("E_WORKERS", e.to_string()))?;
    }
    match cli.command {
        Command::Audit(a) => commands::audit(a),
        Command::Generate(g) => commands::generate(g),
        Command::Benchmark(b) => commands::benchmark(b),
        Command::Render(r) => commands::render(r),
    }
}
