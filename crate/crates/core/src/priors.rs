//! Prior operators applied between the two data solvers of each stage.
//!
//! Classical operators need no training data: the kernel prior projects onto
//! the nonnegative unit-sum simplex, and the image prior damps Laplacian
//! energy in closed form through the DFT. Either can be replaced by a loaded
//! weight file executing the same interface.

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::net::Network;
use crate::ops::fft::{fft2, ifft2_real};

/// Kernel-stream prior operator.
#[derive(Debug, Clone)]
pub enum KernelPrior {
    /// Clamp negatives to zero and (optionally) renormalize to unit sum.
    Classical { unit_sum: bool },
    /// Forward pass of a loaded network, beta supplied as a constant channel.
    Net(Box<Network>),
}

impl KernelPrior {
    pub fn classical() -> Self {
        KernelPrior::Classical { unit_sum: true }
    }

    pub fn apply(&self, kern: &Kernel, beta_k: f64) -> Result<Kernel> {
        match self {
            KernelPrior::Classical { unit_sum } => {
                Ok(classical_kernel_prior(kern, *unit_sum))
            }
            KernelPrior::Net(net) => {
                let k = kern.size();
                let input = Image::from_vec(1, k, k, kern.taps().to_vec())?;
                let out = net.forward_with_beta(&input, beta_k)?;
                if out.channels() != 1 || out.height() != k || out.width() != k {
                    return Err(Error::Manifest(format!(
                        "kernel prior produced {}x{}x{}, expected 1x{k}x{k}",
                        out.channels(),
                        out.height(),
                        out.width()
                    )));
                }
                Kernel::from_vec(k, out.data().to_vec())
            }
        }
    }
}

/// Image-stream prior operator.
#[derive(Debug, Clone)]
pub enum ImagePrior {
    /// Quadratic Laplacian smoother of strength `tau / beta_x`.
    Classical { tau: f64 },
    /// Forward pass of a loaded network, beta supplied as a constant channel.
    Net(Box<Network>),
}

impl ImagePrior {
    pub fn classical(tau: f64) -> Self {
        ImagePrior::Classical { tau }
    }

    pub fn apply(&self, x: &Image, beta_x: f64) -> Result<Image> {
        match self {
            ImagePrior::Classical { tau } => classical_image_prior(x, beta_x, *tau),
            ImagePrior::Net(net) => {
                let out = net.forward_with_beta(x, beta_x)?;
                x.require_same_shape(&out)?;
                Ok(out)
            }
        }
    }
}

/// Projects a kernel onto nonnegative taps; with `unit_sum` the result is
/// renormalized, falling back to the flat kernel when everything clamps to
/// (numerical) zero.
pub fn classical_kernel_prior(kern: &Kernel, unit_sum: bool) -> Kernel {
    let mut out = kern.clone();
    out.taps_mut().iter_mut().for_each(|t| *t = t.max(0.0));
    if unit_sum {
        let sum = out.sum();
        if sum <= 1e-12 {
            return Kernel::flat(kern.size()).expect("size validated by construction");
        }
        out.taps_mut().iter_mut().for_each(|t| *t /= sum);
    }
    out
}

/// Closed-form minimizer of
/// `tau/2 x^T L x + beta/2 ||x - input||^2`
/// for the circular 4-neighbor Laplacian `L`: per frequency the solution is
/// `beta / (tau lap + beta)` times the input, where
/// `lap = 4 sin^2(pi vy / h) + 4 sin^2(pi vx / w)`.
/// The zero frequency passes through untouched, so the mean is preserved.
pub fn classical_image_prior(x: &Image, beta: f64, tau: f64) -> Result<Image> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::Parameter(format!("beta {beta} must be positive")));
    }
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Parameter(format!("tau {tau} must be nonnegative")));
    }
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let mut out = Image::zeros(c, h, w);
    let mut gain = vec![0.0; h * w];
    for vy in 0..h {
        let sy = (std::f64::consts::PI * vy as f64 / h as f64).sin();
        for vx in 0..w {
            let sx = (std::f64::consts::PI * vx as f64 / w as f64).sin();
            let lap = 4.0 * sy * sy + 4.0 * sx * sx;
            gain[vy * w + vx] = beta / (tau * lap + beta);
        }
    }
    for ch in 0..c {
        let mut spec = fft2(x.plane(ch), h, w)?;
        for (bin, g) in spec.bins_mut().iter_mut().zip(&gain) {
            *bin *= g;
        }
        out.plane_mut(ch).copy_from_slice(&ifft2_real(&spec));
    }
    Ok(out)
}
