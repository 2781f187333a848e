//! Evaluation: degrades a directory of ground-truth images with a seeded
//! kernel pool (or consumes provided observations), estimates each one in
//! parallel, and writes per-image and aggregate scores as JSON and CSV.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use udke_core::degrade::{degrade, gen_kernel_pool, DegradationSpec, KernelPoolSpec};
use udke_core::kernel_io::write_kernel;
use udke_core::metrics::{kernel_psnr, psnr, ssim};
use udke_core::unfold::{run_udke, UnfoldConfig};
use udke_core::Kernel;

use super::{CmdResult, Failure, Family};
use crate::pngio::{read_png, write_png};

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Directory of ground-truth pngs.
    #[arg(long)]
    pub hr_dir: PathBuf,
    /// Directory of matching observation pngs; synthesized when omitted.
    #[arg(long)]
    pub lr_dir: Option<PathBuf>,
    /// Artifacts and reports land here.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 6)]
    pub stages: usize,
    #[arg(long, default_value_t = 11)]
    pub kernel_size: usize,
    /// Noise standard deviation on the 0..255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Kernel family for the synthesized degradations.
    #[arg(long, value_enum, default_value_t = Family::GaussAniso)]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for image-level parallelism; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Clone, serde::Serialize)]
struct Row {
    image: String,
    psnr: f64,
    ssim: f64,
    /// Absent when the true kernel is unknown (provided observations).
    kernel_psnr: Option<f64>,
    seconds: f64,
}

pub fn run(args: &Args) -> CmdResult {
    let mut names: Vec<String> = std::fs::read_dir(&args.hr_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Failure::Data(format!(
            "no png files in {}",
            args.hr_dir.display()
        )));
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let truths: Option<Vec<Kernel>> = match args.lr_dir {
        Some(_) => None,
        None => Some(gen_kernel_pool(&KernelPoolSpec {
            family: args.family.into(),
            size: args.kernel_size,
            count: names.len(),
            seed: args.seed,
            sigma_min: 1.0,
            sigma_max: 2.5,
            smoothness: 1.0,
        })?),
    };
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::Data(format!("thread pool: {e}")))?;
    let rows: Vec<Row> = workers.install(|| {
        names
            .par_iter()
            .enumerate()
            .map(|(i, name)| score_one(args, i, name, &truths))
            .collect::<Result<_, Failure>>()
    })?;
    write_report(args, &rows)
}

fn score_one(
    args: &Args,
    index: usize,
    name: &str,
    truths: &Option<Vec<Kernel>>,
) -> Result<Row, Failure> {
    let hr = read_png(&args.hr_dir.join(name))?;
    let stem = name.trim_end_matches(".png");
    let (y, truth) = match (&args.lr_dir, truths) {
        (Some(dir), _) => (read_png(&dir.join(name))?, None),
        (None, Some(pool)) => {
            let spec = DegradationSpec {
                kernel: pool[index].clone(),
                scale: args.scale,
                sigma255: args.sigma,
                seed: args.seed.wrapping_add(index as u64),
            };
            let lr = degrade(&hr, &spec)?;
            write_png(&args.out_dir.join(format!("{stem}_lr.png")), &lr)?;
            (lr, Some(&pool[index]))
        }
        (None, None) => unreachable!("pool exists whenever lr_dir is absent"),
    };
    let mut cfg = UnfoldConfig::new(args.scale);
    cfg.stages = args.stages;
    cfg.kernel_size = args.kernel_size;
    cfg.sigma255 = args.sigma;
    cfg.lambda = args.lambda;
    let started = Instant::now();
    let out = run_udke(&y, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();
    write_png(&args.out_dir.join(format!("{stem}_sr.png")), &out.image)?;
    let config = serde_json::json!({ "command": "evaluate", "config": args }).to_string();
    write_kernel(
        &args.out_dir.join(format!("{stem}_kernel.txt")),
        &out.kernel,
        &[config],
    )?;
    Ok(Row {
        image: name.to_string(),
        psnr: psnr(&out.image, &hr, 1.0)?,
        ssim: ssim(&out.image, &hr, 1.0)?,
        kernel_psnr: truth.map(|t| kernel_psnr(&out.kernel, t)).transpose()?,
        seconds,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn write_report(args: &Args, rows: &[Row]) -> CmdResult {
    let aggregate = serde_json::json!({
        "psnr": mean(rows.iter().map(|r| r.psnr)),
        "ssim": mean(rows.iter().map(|r| r.ssim)),
        "kernel_psnr": mean(rows.iter().filter_map(|r| r.kernel_psnr)),
        "seconds": mean(rows.iter().map(|r| r.seconds)),
    });
    let report = serde_json::json!({
        "command": "evaluate",
        "config": args,
        "rows": rows,
        "aggregate": aggregate,
    });
    std::fs::write(
        args.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("plain fields"),
    )?;
    let mut csv = String::from("image,psnr,ssim,kernel_psnr,seconds\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{},{:.6}",
            r.image,
            r.psnr,
            r.ssim,
            cell(r.kernel_psnr),
            r.seconds
        );
    }
    let _ = writeln!(
        csv,
        "mean,{},{},{},{}",
        cell(mean(rows.iter().map(|r| r.psnr))),
        cell(mean(rows.iter().map(|r| r.ssim))),
        cell(mean(rows.iter().filter_map(|r| r.kernel_psnr))),
        cell(mean(rows.iter().map(|r| r.seconds)))
    );
    std::fs::write(args.out_dir.join("report.csv"), csv)?;
    println!(
        "scored {} images into {} (mean psnr {})",
        rows.len(),
        args.out_dir.display(),
        cell(mean(rows.iter().map(|r| r.psnr)))
    );
    Ok(())
}
