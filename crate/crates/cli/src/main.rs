//! `wcl`: transport costs between point clouds, the depth/pose consistency
//! loss, a synthetic pose-refinement demo, and solver checks.
//!
//! Exit codes: 0 success, 2 input error, 3 numeric failure, 4 divergence.
//! `WCL_THREADS` caps the worker threads used by the solver.

mod commands;
mod error;
mod io;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, compute, refine, synth, validate, wcl, Report};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wcl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Compute(compute::ComputeArgs),
    Wcl(wcl::WclArgs),
    Replay(wcl::ReplayArgs),
    Refine(refine::RefineArgs),
    Validate(validate::ValidateArgs),
    Bench(bench::BenchArgs),
    Synth(synth::SynthArgs),
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("WCL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("WCL_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> CliResult<Report> {
    configure_threads()?;
    match &cli.command {
        Command::Compute(a) => compute::run(a),
        Command::Wcl(a) => wcl::run(a),
        Command::Replay(a) => wcl::replay(a),
        Command::Refine(a) => refine::run(a),
        Command::Validate(a) => validate::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Synth(a) => synth::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
