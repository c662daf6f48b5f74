//! `synthmatch` command-line interface.
//!
//! Exit codes: 0 on success, 1 for runtime and I/O failures, 2 for usage
//! errors. Thread count for parallel commands follows RAYON_NUM_THREADS.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;

/// Errors split by exit code.
#[derive(Debug)]
pub enum AppError {
    /// Bad flags or arguments; exit code 2.
    Usage(String),
    /// Anything that failed while doing the work; exit code 1.
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let result = match cli.command {
        args::Command::Fit(a) => commands::cmd_fit(a),
        args::Command::Render(a) => commands::cmd_render(a),
        args::Command::Edit(a) => commands::cmd_edit(a),
        args::Command::Benchmark(a) => commands::cmd_benchmark(a),
        args::Command::Analyze(a) => commands::cmd_analyze(a),
        args::Command::Generate(a) => commands::cmd_generate(a),
        args::Command::Params(a) => commands::cmd_params(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
