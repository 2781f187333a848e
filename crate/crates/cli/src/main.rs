//! Batch front end: kernel-pool generation, degradation synthesis,
//! estimation, evaluation, oracle verification, and the fast-vs-brute-force
//! benchmark. Every command writes files or reports; none are interactive,
//! and every run is deterministic given its `--seed`.
//!
//! Exit codes: 0 on success, 1 when a solver or verification check fails,
//! 2 on usage or data errors.

mod commands;
mod pngio;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "udke",
    version,
    about = "Blind super-resolution by unfolded kernel estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a pool of synthetic blur kernels as text files.
    GenKernels(commands::gen_kernels::Args),
    /// Blur, downsample, and noise an image into an observation.
    Degrade(commands::degrade::Args),
    /// Estimate the latent image and blur kernel from an observation.
    Estimate(commands::estimate::Args),
    /// Degrade a directory of images, estimate each, and score the results.
    Evaluate(commands::evaluate::Args),
    /// Run the fast-vs-brute-force solver equivalence grids.
    OracleCheck(commands::oracle_check::Args),
    /// Time the fast Gram builder and report its storage-law ratios.
    Bench(commands::bench::Args),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenKernels(args) => commands::gen_kernels::run(args),
        Command::Degrade(args) => commands::degrade::run(args),
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::OracleCheck(args) => commands::oracle_check::run(args),
        Command::Bench(args) => commands::bench::run(args),
    };
    if let Err(failure) = outcome {
        eprintln!("error: {failure}");
        std::process::exit(failure.exit_code());
    }
}
