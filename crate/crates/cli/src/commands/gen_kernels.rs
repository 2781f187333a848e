//! Kernel-pool generation: deterministic per seed, one text file per kernel
//! with the full generation config embedded as a trailing comment.

use std::path::PathBuf;

use udke_core::degrade::{gen_kernel_pool, KernelPoolSpec};
use udke_core::kernel_io::write_kernel;

use super::{CmdResult, Family};

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Directory the kernel files are written into; not part of the
    /// embedded config, so the same seed gives identical files anywhere.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Number of kernels to draw.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Taps per side; must be odd.
    #[arg(long, default_value_t = 11)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = Family::GaussAniso)]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sigma range for the Gaussian families.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub sigma_max: f64,
    /// Blur width for the random family.
    #[arg(long, default_value_t = 1.0)]
    pub smoothness: f64,
}

pub fn run(args: &Args) -> CmdResult {
    let spec = KernelPoolSpec {
        family: args.family.into(),
        size: args.size,
        count: args.count,
        seed: args.seed,
        sigma_min: args.sigma_min,
        sigma_max: args.sigma_max,
        smoothness: args.smoothness,
    };
    let pool = gen_kernel_pool(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let config = serde_json::json!({ "command": "gen-kernels", "config": args }).to_string();
    for (i, kern) in pool.iter().enumerate() {
        let path = args.out_dir.join(format!("kernel_{i:03}.txt"));
        write_kernel(&path, kern, &[config.clone(), format!("index {i}")])?;
    }
    println!("wrote {} kernels to {}", pool.len(), args.out_dir.display());
    Ok(())
}
