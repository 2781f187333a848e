//! Degradation synthesis: blur with a kernel file, sample down, add seeded
//! noise, export 8-bit, and record the full config in a JSON sidecar.

use std::ffi::OsString;
use std::path::PathBuf;

use udke_core::degrade::{degrade, DegradationSpec};
use udke_core::kernel_io::read_kernel;

use super::CmdResult;
use crate::pngio::{read_png, write_png};

#[derive(clap::Args, serde::Serialize)]
pub struct Args {
    /// Source png, 8- or 16-bit grayscale or rgb.
    #[arg(long)]
    pub input: PathBuf,
    /// Blur kernel in the text format.
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Noise standard deviation on the 0..255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output png; the config sidecar lands at this path plus ".json".
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
}

/// Appends ".json" to a full path, keeping the original extension.
pub fn sidecar_path(output: &PathBuf) -> PathBuf {
    let mut os: OsString = output.clone().into();
    os.push(".json");
    PathBuf::from(os)
}

pub fn run(args: &Args) -> CmdResult {
    let hr = read_png(&args.input)?;
    let spec = DegradationSpec {
        kernel: read_kernel(&args.kernel)?,
        scale: args.scale,
        sigma255: args.sigma,
        seed: args.seed,
    };
    let lr = degrade(&hr, &spec)?;
    write_png(&args.output, &lr)?;
    let sidecar = serde_json::json!({ "command": "degrade", "config": args });
    std::fs::write(
        sidecar_path(&args.output),
        serde_json::to_string_pretty(&sidecar).expect("plain fields"),
    )?;
    println!(
        "degraded {} ({}x{}) -> {} ({}x{})",
        args.input.display(),
        hr.height(),
        hr.width(),
        args.output.display(),
        lr.height(),
        lr.width()
    );
    Ok(())
}
