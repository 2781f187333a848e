//! Batch verification of the fast normal-equation builder.
//!
//! The grid runner sweeps image sizes, kernel sizes, strides, and channel
//! counts, comparing the fast Gram matrix and right-hand side against the
//! brute-force oracle on freshly seeded random images, and checking the
//! builder's recorded workspace against the memory law. Cells run in
//! parallel; each draws from its own RNG sub-stream so reports do not depend
//! on scheduling. A fault-injection knob perturbs one fast entry before
//! comparison, proving the harness can actually fail. A companion sweep
//! checks the fast image solver against its dense oracle. The bench runner
//! times the fast builder at working sizes and reports measured and
//! predicted memory ratios against brute-force patch materialization.

use rayon::prelude::*;

use crate::degrade::stream_rng;
use crate::error::Result;
use crate::image::Image;
use crate::kstream::{build_gram_fast, build_rhs_fast, GramStats};
use crate::linalg::Mat;
use crate::oracles::{gram_bruteforce, rhs_bruteforce};
use rand::Rng;

/// Sweep definition for the equivalence grid.
#[derive(Debug, Clone)]
pub struct GridConfig {
    /// Candidate heights and widths; all pairs are visited.
    pub sizes: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub scales: Vec<usize>,
    pub channel_counts: Vec<usize>,
    pub trials_per_cell: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Relative fault injected into one fast Gram entry before comparing.
    pub perturb: f64,
}

impl GridConfig {
    /// Full sweep at the pinned tolerance: sizes {8,12,16,24,32} squared,
    /// kernels {1,3,5,7,11}, strides {1,2,3,4}, 1 and 3 channels.
    pub fn full(seed: u64, trials_per_cell: usize) -> GridConfig {
        GridConfig {
            sizes: vec![8, 12, 16, 24, 32],
            kernel_sizes: vec![1, 3, 5, 7, 11],
            scales: vec![1, 2, 3, 4],
            channel_counts: vec![1, 3],
            trials_per_cell,
            tolerance: 1e-9,
            seed,
            perturb: 0.0,
        }
    }

    /// Abbreviated sweep for quick smoke checks.
    pub fn smoke(seed: u64) -> GridConfig {
        GridConfig {
            sizes: vec![8, 12],
            kernel_sizes: vec![1, 3, 5],
            scales: vec![1, 2],
            channel_counts: vec![1],
            trials_per_cell: 3,
            tolerance: 1e-9,
            seed,
            perturb: 0.0,
        }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &h in &self.sizes {
            for &w in &self.sizes {
                for &k in &self.kernel_sizes {
                    if k > h.min(w) {
                        continue;
                    }
                    for &s in &self.scales {
                        if h % s != 0 || w % s != 0 {
                            continue;
                        }
                        for &c in &self.channel_counts {
                            cells.push(Cell { c, h, w, k, s });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
}

impl Cell {
    fn label(&self) -> String {
        format!(
            "c={} h={} w={} k={} s={}",
            self.c, self.h, self.w, self.k, self.s
        )
    }
}

/// Outcome of a grid sweep; empty `failures` means every comparison passed.
#[derive(Debug, Clone)]
pub struct GridReport {
    pub cells: usize,
    pub trials: usize,
    pub max_rel_err: f64,
    pub failures: Vec<String>,
}

impl GridReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs the sweep, one parallel task per cell.
pub fn run_gram_grid(cfg: &GridConfig) -> Result<GridReport> {
    let cells = cfg.cells();
    let outcomes: Vec<Result<(usize, f64, Vec<String>)>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| run_cell(cfg, idx as u64, cell))
        .collect();
    let mut report = GridReport {
        cells: cells.len(),
        trials: 0,
        max_rel_err: 0.0,
        failures: Vec::new(),
    };
    for outcome in outcomes {
        let (trials, max_err, mut failures) = outcome?;
        report.trials += trials;
        report.max_rel_err = report.max_rel_err.max(max_err);
        report.failures.append(&mut failures);
    }
    Ok(report)
}

fn run_cell(cfg: &GridConfig, idx: u64, cell: &Cell) -> Result<(usize, f64, Vec<String>)> {
    let mut rng = stream_rng(cfg.seed, idx);
    let mut max_err: f64 = 0.0;
    let mut failures = Vec::new();
    for trial in 0..cfg.trials_per_cell {
        let x = random_image(&mut rng, cell.c, cell.h, cell.w);
        let y = random_image(&mut rng, cell.c, cell.h / cell.s, cell.w / cell.s);

        let (mut fast, stats) = build_gram_fast(&x, cell.k, cell.s)?;
        if cfg.perturb != 0.0 {
            // the zero-lag autocorrelation entry never vanishes on random
            // images, so a relative nudge always lands
            fast.data[0] *= 1.0 + cfg.perturb;
        }
        let brute = gram_bruteforce(&x, cell.k, cell.s)?;
        let gram_err = rel_frobenius(&fast.data, &brute.data);

        let fast_rhs = build_rhs_fast(&x, &y, cell.k, cell.s)?;
        let brute_rhs = rhs_bruteforce(&x, &y, cell.k, cell.s)?;
        let rhs_err = rel_frobenius(&fast_rhs, &brute_rhs);

        let err = gram_err.max(rhs_err);
        max_err = max_err.max(err);
        if err > cfg.tolerance {
            failures.push(format!(
                "{} trial {trial}: rel err {err:.3e} exceeds {:.1e}",
                cell.label(),
                cfg.tolerance
            ));
        }
        if !within_memory_law(&stats, cell) {
            failures.push(format!(
                "{} trial {trial}: workspace {} breaks the memory law",
                cell.label(),
                stats.aux_scalars
            ));
        }
    }
    Ok((cfg.trials_per_cell, max_err, failures))
}

// workspace over brute-force patch storage C h w k^2 must stay under
// 1.5 (s^2 + k^4/(h w)) / k^2, i.e. aux <= 1.5 C (s^2 h w + k^4)
fn within_memory_law(stats: &GramStats, cell: &Cell) -> bool {
    let k4 = (cell.k * cell.k * cell.k * cell.k) as f64;
    let bound = 1.5 * cell.c as f64 * ((cell.s * cell.s * cell.h * cell.w) as f64 + k4);
    (stats.aux_scalars as f64) <= bound
}

fn random_image(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Image {
    let data = (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::from_vec(c, h, w, data).expect("dimensions are positive")
}

fn rel_frobenius(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|v| v * v).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Timing and workspace figures for one fast-builder invocation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchReport {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub scale: usize,
    pub fast_seconds: f64,
    pub aux_scalars: usize,
    pub bruteforce_scalars: usize,
    /// Brute-force patch scalars over actual workspace.
    pub measured_ratio: f64,
    /// Patch rows over Gram rows, the asymptotic storage law h w / k^2.
    pub law_ratio: f64,
}

/// Builds the Gram system once at the given geometry and reports workspace
/// ratios; `gram` output is discarded.
pub fn bench_gram(c: usize, h: usize, w: usize, k: usize, s: usize) -> Result<BenchReport> {
    let mut rng = stream_rng(0xbe9c, 0);
    let x = random_image(&mut rng, c, h, w);
    let started = std::time::Instant::now();
    let (gram, stats) = build_gram_fast(&x, k, s)?;
    let fast_seconds = started.elapsed().as_secs_f64();
    let _: &Mat = &gram;
    Ok(BenchReport {
        channels: c,
        height: h,
        width: w,
        kernel: k,
        scale: s,
        fast_seconds,
        aux_scalars: stats.aux_scalars,
        bruteforce_scalars: stats.bruteforce_scalars,
        measured_ratio: stats.ratio(),
        law_ratio: law_ratio(h, w, k),
    })
}

/// Storage-law ratio `h w / k^2`: dense patch rows versus Gram rows. Usable
/// as a prediction at sizes too large to materialize.
pub fn law_ratio(h: usize, w: usize, k: usize) -> f64 {
    (h * w) as f64 / (k * k) as f64
}

/// Outcome of an image-solver sweep against the dense oracle.
#[derive(Debug, Clone)]
pub struct XSolverReport {
    pub trials: usize,
    pub max_rel_err: f64,
    /// Worst objective-gradient norm over the solution norm.
    pub max_grad: f64,
}

impl XSolverReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance && self.max_grad <= tolerance
    }
}

/// Sweeps the fast image solver against the dense oracle on small
/// geometries; `perturb` injects a relative fault into the fast solution so
/// the comparison itself can be proven live.
pub fn run_xsolver_grid(seed: u64, trials: usize, perturb: f64) -> Result<XSolverReport> {
    use crate::ops::{conv2d_circular, downsample, zero_upsample};
    let sizes = [8usize, 12, 16];
    let mut max_rel = 0.0f64;
    let mut max_grad = 0.0f64;
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial as u64);
        let h = sizes[rng.gen_range(0..sizes.len())];
        let w = sizes[rng.gen_range(0..sizes.len())];
        let k = [3, 5][trial % 2];
        let s = [1, 2][(trial / 2) % 2];
        let c = [1, 3][(trial / 4) % 2];
        let x_prev = random_image(&mut rng, c, h, w);
        let y = random_image(&mut rng, c, h / s, w / s);
        let kern = random_unit_kernel(&mut rng, k);
        let alpha = 10f64.powf(rng.gen_range(-3.0..1.0));
        let mut fast = crate::xstream::solve_x_data(&y, &kern, &x_prev, alpha)?;
        if perturb != 0.0 {
            fast.data_mut()[0] *= 1.0 + perturb;
        }
        let oracle = crate::oracles::solve_x_oracle(&y, &kern, &x_prev, alpha, s)?;
        max_rel = max_rel.max(rel_frobenius(fast.data(), oracle.data()));
        let pred = downsample(&conv2d_circular(&fast, &kern)?, s, (0, 0))?;
        let mut residual = pred;
        for (r, yv) in residual.data_mut().iter_mut().zip(y.data()) {
            *r -= yv;
        }
        let backprop = conv2d_circular(&zero_upsample(&residual, s)?, &kern.flipped())?;
        let grad = backprop
            .data()
            .iter()
            .zip(fast.data())
            .zip(x_prev.data())
            .map(|((g, xi), xp)| {
                let v = g + alpha * (xi - xp);
                v * v
            })
            .sum::<f64>()
            .sqrt();
        let scale = fast.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        max_grad = max_grad.max(grad / scale.max(1.0));
    }
    Ok(XSolverReport {
        trials,
        max_rel_err: max_rel,
        max_grad,
    })
}

fn random_unit_kernel(rng: &mut impl Rng, k: usize) -> crate::image::Kernel {
    let mut taps: Vec<f64> = (0..k * k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    crate::image::Kernel::from_vec(k, taps).expect("odd size")
}
