//! Estimation: runs the unfolding on one observation and writes the image,
//! the kernel, and a per-stage trace that echoes the full configuration.

use std::path::{Path, PathBuf};

use udke_core::net::Network;
use udke_core::priors::{ImagePrior, KernelPrior};
use udke_core::unfold::{run_udke, ScheduleSource, StageHyperParams, UnfoldConfig, UnfoldOutput};
use udke_core::kernel_io::write_kernel;

use super::{CmdResult, Failure};
use crate::pngio::{read_png, write_png};

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Low-resolution observation png.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 6)]
    pub stages: usize,
    /// Taps per side of the estimated kernel; must be odd.
    #[arg(long, default_value_t = 11)]
    pub kernel_size: usize,
    /// Assumed noise standard deviation on the 0..255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Weight manifests; the classical priors run where these are omitted.
    #[arg(long)]
    pub net_k: Option<PathBuf>,
    #[arg(long)]
    pub net_x: Option<PathBuf>,
    #[arg(long)]
    pub hypanet: Option<PathBuf>,
    /// Estimated image output png.
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Estimated kernel text file; defaults next to the output png.
    #[arg(long)]
    #[serde(skip)]
    pub kernel_out: Option<PathBuf>,
    /// Per-stage trace json; defaults next to the output png.
    #[arg(long)]
    #[serde(skip)]
    pub trace_out: Option<PathBuf>,
}

#[derive(serde::Serialize)]
struct StageRow {
    stage: usize,
    hyper: StageHyperParams,
    k_objective_before: f64,
    k_objective_after: f64,
    x_objective_before: f64,
    x_objective_after: f64,
    residual: f64,
}

fn prior_label(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("weights:{}", p.display()),
        None => "classical".into(),
    }
}

fn build_config(args: &Args) -> Result<UnfoldConfig, Failure> {
    let mut cfg = UnfoldConfig::new(args.scale);
    cfg.stages = args.stages;
    cfg.kernel_size = args.kernel_size;
    cfg.sigma255 = args.sigma;
    cfg.lambda = args.lambda;
    if let Some(path) = &args.net_k {
        cfg.kernel_prior = KernelPrior::Net(Box::new(Network::load(path)?));
    }
    if let Some(path) = &args.net_x {
        cfg.image_prior = ImagePrior::Net(Box::new(Network::load(path)?));
    }
    if let Some(path) = &args.hypanet {
        cfg.schedule = ScheduleSource::Learned(Box::new(Network::load(path)?));
    }
    Ok(cfg)
}

fn write_reports(args: &Args, out: &UnfoldOutput) -> CmdResult {
    write_png(&args.output, &out.image)?;
    let config = serde_json::json!({ "command": "estimate", "config": args }).to_string();
    let kernel_path = args
        .kernel_out
        .clone()
        .unwrap_or_else(|| args.output.with_extension("kernel.txt"));
    write_kernel(&kernel_path, &out.kernel, &[config])?;
    let rows: Vec<StageRow> = out
        .trace
        .stages
        .iter()
        .map(|t| StageRow {
            stage: t.stage,
            hyper: t.hyper,
            k_objective_before: t.k_objective_before,
            k_objective_after: t.k_objective_after,
            x_objective_before: t.x_objective_before,
            x_objective_after: t.x_objective_after,
            residual: t.residual,
        })
        .collect();
    let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let trace = serde_json::json!({
        "command": "estimate",
        "config": args,
        "priors": {
            "kernel": prior_label(&args.net_k),
            "image": prior_label(&args.net_x),
            "schedule": prior_label(&args.hypanet),
        },
        "stages": rows,
        "residuals": residuals,
    });
    let trace_path = args
        .trace_out
        .clone()
        .unwrap_or_else(|| args.output.with_extension("trace.json"));
    std::fs::write(
        &trace_path,
        serde_json::to_string_pretty(&trace).expect("plain fields"),
    )?;
    report_line(args, &kernel_path, &trace_path, &residuals);
    Ok(())
}

fn report_line(args: &Args, kernel_path: &Path, trace_path: &Path, residuals: &[f64]) {
    println!(
        "estimated {} -> {} + {} + {} (final residual {:.4e})",
        args.input.display(),
        args.output.display(),
        kernel_path.display(),
        trace_path.display(),
        residuals.last().copied().unwrap_or(f64::NAN)
    );
}

pub fn run(args: &Args) -> CmdResult {
    let y = read_png(&args.input)?;
    let cfg = build_config(args)?;
    let out = run_udke(&y, &cfg)?;
    write_reports(args, &out)
}
