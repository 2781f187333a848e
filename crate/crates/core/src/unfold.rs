//! Stage loop joining the kernel and image solvers into one estimator.
//!
//! Starting from a bicubic upsample and a flat kernel, each stage solves the
//! kernel least squares anchored at the previous kernel, applies the kernel
//! prior, solves the image least squares anchored at the previous image, and
//! applies the image prior. Anchor weights follow a schedule that tightens
//! geometrically over stages: early stages stay close to the smooth
//! initialization so the kernel sees blur instead of aliasing detail, late
//! stages let the data term dominate. The schedule can come from the built-in
//! fixed rule or from a loaded predictor network. Every stage records both
//! solver objectives before and after the solve, so a run certifies its own
//! monotone descent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::kstream::{k_data_objective, solve_k_data};
use crate::net::Network;
use crate::ops::{bicubic_upsample, conv2d_circular, downsample};
use crate::priors::{ImagePrior, KernelPrior};
use crate::xstream::{solve_x_data, x_data_objective};

/// Anchor and prior weights for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageHyperParams {
    pub alpha_k: f64,
    pub alpha_x: f64,
    pub beta_k: f64,
    pub beta_x: f64,
}

impl StageHyperParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_k", self.alpha_k),
            ("alpha_x", self.alpha_x),
            ("beta_k", self.beta_k),
            ("beta_x", self.beta_x),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "stage weight {name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Geometric anchor schedule in data-weight form. Stage weights are
/// `alpha = mu * max(sigma, sigma_floor)^2` and `beta = mu / lambda`, with
/// `mu` log-spaced from start to end across stages. The kernel stream and
/// image stream carry separate ranges: the kernel anchor must stay heavy
/// early (a bicubic upsample reproduces the observation under a delta kernel,
/// so an unanchored first stage collapses), while the image anchor must stay
/// light enough to add detail at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedSchedule {
    pub mu_k_start: f64,
    pub mu_k_end: f64,
    pub mu_x_start: f64,
    pub mu_x_end: f64,
    pub sigma_floor: f64,
}

impl Default for FixedSchedule {
    fn default() -> Self {
        FixedSchedule {
            mu_k_start: 4e5,
            mu_k_end: 4e7,
            mu_x_start: 40.0,
            mu_x_end: 4e3,
            sigma_floor: 5e-3,
        }
    }
}

/// Stage weights under a fixed schedule; `t` counts from 1 to `stages`.
pub fn fixed_schedule(
    t: usize,
    stages: usize,
    sigma255: f64,
    lambda: f64,
    sched: &FixedSchedule,
) -> Result<StageHyperParams> {
    if t == 0 || t > stages {
        return Err(Error::Parameter(format!(
            "stage {t} outside 1..={stages}"
        )));
    }
    let frac = (t - 1) as f64 / (stages - 1).max(1) as f64;
    let sig_eff = (sigma255 / 255.0).max(sched.sigma_floor);
    let mu_k = sched.mu_k_start * (sched.mu_k_end / sched.mu_k_start).powf(frac);
    let mu_x = sched.mu_x_start * (sched.mu_x_end / sched.mu_x_start).powf(frac);
    let params = StageHyperParams {
        alpha_k: mu_k * sig_eff * sig_eff,
        alpha_x: mu_x * sig_eff * sig_eff,
        beta_k: mu_k / lambda,
        beta_x: mu_x / lambda,
    };
    params.validate()?;
    Ok(params)
}

/// Where stage weights come from.
#[derive(Debug, Clone)]
pub enum ScheduleSource {
    Fixed(FixedSchedule),
    /// Predictor network mapping (scale, noise level) to one four-weight
    /// block per stage, or a single shared block.
    Learned(Box<Network>),
}

impl ScheduleSource {
    fn stage_params(
        &self,
        t: usize,
        stages: usize,
        scale: usize,
        sigma255: f64,
        lambda: f64,
    ) -> Result<StageHyperParams> {
        match self {
            ScheduleSource::Fixed(sched) => fixed_schedule(t, stages, sigma255, lambda, sched),
            ScheduleSource::Learned(net) => {
                let input =
                    Image::from_vec(2, 1, 1, vec![scale as f64, sigma255 / 255.0])?;
                let out = net.forward(&input)?;
                if out.len() % 4 != 0 {
                    return Err(Error::Manifest(format!(
                        "schedule network emits {} values, not a multiple of 4",
                        out.len()
                    )));
                }
                let blocks = out.len() / 4;
                let block = if blocks == stages {
                    t - 1
                } else if blocks == 1 {
                    0
                } else {
                    return Err(Error::Manifest(format!(
                        "schedule network predicts {blocks} stages, run has {stages}"
                    )));
                };
                let v = &out.data()[block * 4..block * 4 + 4];
                let params = StageHyperParams {
                    alpha_k: v[0],
                    alpha_x: v[1],
                    beta_k: v[2],
                    beta_x: v[3],
                };
                params.validate()?;
                Ok(params)
            }
        }
    }
}

/// Full configuration of one estimation run.
#[derive(Debug, Clone)]
pub struct UnfoldConfig {
    pub stages: usize,
    pub kernel_size: usize,
    pub scale: usize,
    pub sigma255: f64,
    pub lambda: f64,
    pub schedule: ScheduleSource,
    pub kernel_prior: KernelPrior,
    pub image_prior: ImagePrior,
    /// Keep every post-prior stage image in the trace (memory-heavy).
    pub keep_stage_images: bool,
}

impl UnfoldConfig {
    pub fn new(scale: usize) -> UnfoldConfig {
        UnfoldConfig {
            stages: 6,
            kernel_size: 11,
            scale,
            sigma255: 0.0,
            lambda: 10.0,
            schedule: ScheduleSource::Fixed(FixedSchedule::default()),
            kernel_prior: KernelPrior::classical(),
            image_prior: ImagePrior::classical(1.2),
            keep_stage_images: false,
        }
    }
}

/// Record of one completed stage. The before and after values evaluate the
/// stage's own anchored objective at the previous and at the solved iterate,
/// so `after <= before` certifies solver descent.
#[derive(Debug, Clone)]
pub struct StageTrace {
    pub stage: usize,
    pub hyper: StageHyperParams,
    pub kernel: Kernel,
    pub image: Option<Image>,
    pub k_objective_before: f64,
    pub k_objective_after: f64,
    pub x_objective_before: f64,
    pub x_objective_after: f64,
    /// Data residual norm after both priors.
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct UnfoldTrace {
    pub stages: Vec<StageTrace>,
}

/// Result of an estimation run.
#[derive(Debug, Clone)]
pub struct UnfoldOutput {
    pub image: Image,
    pub kernel: Kernel,
    /// Bicubic initialization, kept for comparison.
    pub init: Image,
    pub trace: UnfoldTrace,
}

/// Runs the full unfolding on observation `y`, producing the estimated image
/// and kernel plus the per-stage trace.
pub fn run_udke(y: &Image, cfg: &UnfoldConfig) -> Result<UnfoldOutput> {
    if cfg.scale == 0 {
        return Err(Error::Parameter("scale must be at least 1".into()));
    }
    if cfg.stages == 0 {
        return Err(Error::Parameter("stage count must be at least 1".into()));
    }
    if cfg.sigma255 < 0.0 || !cfg.sigma255.is_finite() {
        return Err(Error::Parameter(format!(
            "noise sigma {} must be nonnegative",
            cfg.sigma255
        )));
    }
    if cfg.lambda <= 0.0 || !cfg.lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "lambda {} must be positive",
            cfg.lambda
        )));
    }
    let (h, w) = (y.height() * cfg.scale, y.width() * cfg.scale);
    if cfg.kernel_size > h || cfg.kernel_size > w {
        return Err(Error::Dimension(format!(
            "kernel {0}x{0} exceeds reconstruction {h}x{w}",
            cfg.kernel_size
        )));
    }

    let init = bicubic_upsample(y, cfg.scale)?;
    let mut x = init.clone();
    let mut kern = Kernel::flat(cfg.kernel_size)?;
    let mut trace = UnfoldTrace::default();

    for t in 1..=cfg.stages {
        let stage = |e: Error| e.at_stage(t);
        let hyper = self::stage_params(cfg, t)?;

        let k_before = k_data_objective(y, &kern, &x, hyper.alpha_k, &kern).map_err(stage)?;
        let k_raw = solve_k_data(y, &kern, &x, hyper.alpha_k).map_err(stage)?;
        let k_after = k_data_objective(y, &k_raw, &x, hyper.alpha_k, &kern).map_err(stage)?;
        kern = cfg.kernel_prior.apply(&k_raw, hyper.beta_k).map_err(stage)?;

        let x_before = x_data_objective(y, &kern, &x, hyper.alpha_x, &x).map_err(stage)?;
        let x_raw = solve_x_data(y, &kern, &x, hyper.alpha_x).map_err(stage)?;
        let x_after = x_data_objective(y, &kern, &x_raw, hyper.alpha_x, &x).map_err(stage)?;
        x = cfg.image_prior.apply(&x_raw, hyper.beta_x).map_err(stage)?;

        let pred = downsample(&conv2d_circular(&x, &kern)?, cfg.scale, (0, 0))?;
        let residual = pred
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, o)| (p - o) * (p - o))
            .sum::<f64>()
            .sqrt();

        trace.stages.push(StageTrace {
            stage: t,
            hyper,
            kernel: kern.clone(),
            image: cfg.keep_stage_images.then(|| x.clone()),
            k_objective_before: k_before,
            k_objective_after: k_after,
            x_objective_before: x_before,
            x_objective_after: x_after,
            residual,
        });
    }

    Ok(UnfoldOutput {
        image: x,
        kernel: kern,
        init,
        trace,
    })
}

fn stage_params(cfg: &UnfoldConfig, t: usize) -> Result<StageHyperParams> {
    cfg.schedule
        .stage_params(t, cfg.stages, cfg.scale, cfg.sigma255, cfg.lambda)
        .map_err(|e| e.at_stage(t))
}
