//! Oracle verification: sweeps the fast Gram builder and the fast image
//! solver against their brute-force references, printing worst-case errors.
//! A nonzero `--perturb` injects a relative fault to prove the comparisons
//! can fail; detected faults exit 1.

use udke_core::verify::{run_gram_grid, run_xsolver_grid, GridConfig};

use super::{CmdResult, Failure};

const X_TOLERANCE: f64 = 1e-6;

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Run the full grid instead of the smoke grid.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trials per Gram cell; defaults to 3 (smoke) or 100 (full).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Image-solver trials against the dense oracle.
    #[arg(long, default_value_t = 24)]
    pub x_trials: usize,
    /// Relative fault injected into the fast results.
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
}

pub fn run(args: &Args) -> CmdResult {
    let mut cfg = if args.full {
        GridConfig::full(args.seed, args.trials.unwrap_or(100))
    } else {
        GridConfig::smoke(args.seed)
    };
    if let Some(t) = args.trials {
        cfg.trials_per_cell = t;
    }
    cfg.perturb = args.perturb;
    let gram = run_gram_grid(&cfg)?;
    println!(
        "gram grid: {} cells, {} trials, max rel err {:.3e} (tol {:.0e})",
        gram.cells, gram.trials, gram.max_rel_err, cfg.tolerance
    );
    for fault in gram.failures.iter().take(5) {
        println!("  fault: {fault}");
    }
    if gram.failures.len() > 5 {
        println!("  ... and {} more", gram.failures.len() - 5);
    }
    let x = run_xsolver_grid(args.seed, args.x_trials, args.perturb)?;
    println!(
        "image solver: {} trials, max rel err {:.3e}, max scaled gradient {:.3e} (tol {X_TOLERANCE:.0e})",
        x.trials, x.max_rel_err, x.max_grad
    );
    if gram.passed() && x.passed(X_TOLERANCE) {
        println!("oracle check: PASS");
        Ok(())
    } else {
        Err(Failure::Check(
            "oracle comparison exceeded tolerance".into(),
        ))
    }
}
