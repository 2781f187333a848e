//! Gram-builder benchmark: measures wall time and auxiliary storage against
//! brute-force patch materialization over a size grid, reports the measured
//! ratio next to the h*w/k^2 storage law, and echoes the law's prediction at
//! 2048x1024 where the dense path cannot be materialized.

use std::path::PathBuf;

use udke_core::verify::{bench_gram, law_ratio, BenchReport};

use super::CmdResult;

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Comma-separated square sizes to measure.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 11)]
    pub kernel: usize,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Also write the rows as json.
    #[arg(long)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
}

pub fn run(args: &Args) -> CmdResult {
    println!(
        "{:>6} {:>6} {:>3} {:>2} {:>10} {:>12} {:>12} {:>10} {:>10}",
        "h", "w", "k", "s", "seconds", "aux", "brute", "measured", "law"
    );
    let mut rows: Vec<BenchReport> = Vec::new();
    for &size in &args.sizes {
        let row = bench_gram(args.channels, size, size, args.kernel, args.scale)?;
        println!(
            "{:>6} {:>6} {:>3} {:>2} {:>10.4} {:>12} {:>12} {:>9.1}x {:>9.1}x",
            row.height,
            row.width,
            row.kernel,
            row.scale,
            row.fast_seconds,
            row.aux_scalars,
            row.bruteforce_scalars,
            row.measured_ratio,
            row.law_ratio
        );
        rows.push(row);
    }
    let prediction = law_ratio(2048, 1024, args.kernel);
    let over = if args.kernel == 11 { " (over 17000x)" } else { "" };
    println!(
        "{:>6} {:>6} {:>3} {:>2} storage law h*w/k^2 predicts {prediction:.1}x{over}, not measured at desk scale",
        2048, 1024, args.kernel, args.scale
    );
    if let Some(path) = &args.json {
        let report = serde_json::json!({
            "command": "bench",
            "config": args,
            "rows": rows,
            "prediction": {
                "height": 2048,
                "width": 1024,
                "kernel": args.kernel,
                "law_ratio": prediction,
                "measured": false,
            },
        });
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("plain fields"),
        )?;
    }
    Ok(())
}
