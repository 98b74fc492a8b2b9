//! `grassq`: every experiment of the toolkit as a reproducible subcommand.
//!
//! Exit codes: 0 success, 1 domain failure (infeasible budget, diverged
//! training, out-of-regime bound), 2 usage or I/O error.

mod cmd;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "grassq",
    version,
    about = "Hierarchical Grassmannian gradient quantization toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design a block (line packing) or hinge (Lloyd) codebook.
    Codebook(cmd::codebook::Args),
    /// Bit allocation and closed-form bounds.
    Bitalloc(cmd::bitalloc::Args),
    /// Monte-Carlo distortion sweep.
    Distortion(cmd::distortion::Args),
    /// Federated training run.
    Fedsim(cmd::fedsim::Args),
    /// Kolmogorov-Smirnov tests.
    Stats(cmd::stats::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Codebook(a) => cmd::codebook::run(a, &argv),
        Command::Bitalloc(a) => cmd::bitalloc::run(a, &argv),
        Command::Distortion(a) => cmd::distortion::run(a, &argv),
        Command::Fedsim(a) => cmd::fedsim::run(a, &argv),
        Command::Stats(a) => cmd::stats::run(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
