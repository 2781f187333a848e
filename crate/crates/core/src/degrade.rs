//! Forward degradation model and synthetic blur-kernel generators.
//!
//! An observation is produced as `downsample(conv2d_circular(x, k), s) + n`
//! with i.i.d. Gaussian noise. Noise level is quoted on the 0..255 scale and
//! divided by 255 internally so pixel data stays on the unit scale. Nothing
//! is clipped here; quantization happens only at PNG export.
//!
//! Randomness is drawn from ChaCha8, a counter-based generator with explicit
//! stream splitting: `stream_rng(seed, stream)` yields independent sequences
//! for the same master seed, which keeps batch jobs reproducible regardless
//! of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::ops::{conv2d_circular, downsample};

/// Complete description of one synthetic degradation.
#[derive(Debug, Clone)]
pub struct DegradationSpec {
    pub kernel: Kernel,
    pub scale: usize,
    /// Noise standard deviation on the 0..255 scale.
    pub sigma255: f64,
    pub seed: u64,
}

/// RNG for a numbered sub-stream of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Applies blur, strided sampling at offset (0, 0), and Gaussian noise.
pub fn degrade(x: &Image, spec: &DegradationSpec) -> Result<Image> {
    if spec.sigma255 < 0.0 || !spec.sigma255.is_finite() {
        return Err(Error::Parameter(format!(
            "noise sigma {} must be nonnegative",
            spec.sigma255
        )));
    }
    let blurred = conv2d_circular(x, &spec.kernel)?;
    let mut y = downsample(&blurred, spec.scale, (0, 0))?;
    if spec.sigma255 > 0.0 {
        let sigma = spec.sigma255 / 255.0;
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut rng = stream_rng(spec.seed, 0);
        for v in y.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(y)
}

/// Anisotropic Gaussian blur kernel, normalized to unit sum.
///
/// `theta` rotates the principal axes counter-clockwise; the density is
/// evaluated on the tap grid relative to the center tap.
pub fn gen_gaussian_kernel(k: usize, sigma_x: f64, sigma_y: f64, theta: f64) -> Result<Kernel> {
    if sigma_x <= 0.0 || sigma_y <= 0.0 || !sigma_x.is_finite() || !sigma_y.is_finite() {
        return Err(Error::Parameter(format!(
            "sigmas ({sigma_x}, {sigma_y}) must be positive"
        )));
    }
    let mut kern = Kernel::from_vec(k, vec![0.0; k * k])?;
    let c = kern.center() as f64;
    let (sin, cos) = theta.sin_cos();
    // inverse covariance of R diag(sx^2, sy^2) R^T
    let (ix, iy) = (1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y));
    let a = cos * cos * ix + sin * sin * iy;
    let b = sin * cos * (ix - iy);
    let d = sin * sin * ix + cos * cos * iy;
    for u in 0..k {
        let dy = u as f64 - c;
        for v in 0..k {
            let dx = v as f64 - c;
            let q = a * dx * dx + 2.0 * b * dx * dy + d * dy * dy;
            kern.set(u, v, (-0.5 * q).exp());
        }
    }
    let sum = kern.sum();
    kern.taps_mut().iter_mut().for_each(|t| *t /= sum);
    Ok(kern)
}

/// Irregular nonnegative kernel: an i.i.d. exponential field blurred
/// circularly at width `smoothness`, shaped by a random Gaussian envelope,
/// normalized to unit sum.
pub fn gen_random_kernel(k: usize, seed: u64, smoothness: f64) -> Result<Kernel> {
    if smoothness <= 0.0 || !smoothness.is_finite() {
        return Err(Error::Parameter(format!(
            "smoothness {smoothness} must be positive"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    // exponential(1) field via inverse CDF
    let field: Vec<f64> = (0..k * k)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let field = Image::from_vec(1, k, k, field)?;
    let blur = gen_gaussian_kernel(k, smoothness, smoothness, 0.0)?;
    let smoothed = conv2d_circular(&field, &blur)?;

    let kf = k as f64;
    let env_sx = rng.gen_range(kf / 8.0..kf / 4.0);
    let env_sy = rng.gen_range(kf / 8.0..kf / 4.0);
    let env_th = rng.gen_range(0.0..std::f64::consts::PI);
    let envelope = gen_gaussian_kernel(k, env_sx, env_sy, env_th)?;

    let mut kern = Kernel::from_vec(k, vec![0.0; k * k])?;
    for u in 0..k {
        for v in 0..k {
            kern.set(u, v, smoothed.get(0, u, v).max(0.0) * envelope.get(u, v));
        }
    }
    let sum = kern.sum();
    if sum <= 1e-12 {
        return Kernel::flat(k);
    }
    kern.taps_mut().iter_mut().for_each(|t| *t /= sum);
    Ok(kern)
}

/// Smooth synthetic test image: per channel, a unit-normal field is blurred
/// circularly at width `blur_sigma` and min-max rescaled into [0.05, 0.95].
pub fn gen_smooth_texture(
    channels: usize,
    height: usize,
    width: usize,
    blur_sigma: f64,
    seed: u64,
) -> Result<Image> {
    if channels == 0 {
        return Err(Error::Parameter("channel count must be positive".into()));
    }
    if blur_sigma <= 0.0 || !blur_sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "blur sigma {blur_sigma} must be positive"
        )));
    }
    let side = height.min(width).min(11);
    let blur = gen_gaussian_kernel(side - (side + 1) % 2, blur_sigma, blur_sigma, 0.0)?;
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let mut out = Image::zeros(channels, height, width);
    for c in 0..channels {
        let field: Vec<f64> = (0..height * width).map(|_| normal.sample(&mut rng)).collect();
        let field = Image::from_vec(1, height, width, field)?;
        let smooth = conv2d_circular(&field, &blur)?;
        let lo = smooth.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = smooth.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for (dst, v) in out.plane_mut(c).iter_mut().zip(smooth.data()) {
            *dst = if span > 0.0 {
                0.05 + 0.9 * (v - lo) / span
            } else {
                0.5
            };
        }
    }
    Ok(out)
}

/// Kernel family selector for pool generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    GaussIso,
    GaussAniso,
    Random,
}

/// Batch description for `gen_kernel_pool`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelPoolSpec {
    pub family: KernelFamily,
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    /// Sigma range sampled uniformly (both axes for the anisotropic family).
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Blur width for the random family.
    pub smoothness: f64,
}

impl KernelPoolSpec {
    pub fn new(family: KernelFamily, size: usize, count: usize, seed: u64) -> Self {
        KernelPoolSpec {
            family,
            size,
            count,
            seed,
            sigma_min: 1.0,
            sigma_max: 2.5,
            smoothness: 1.0,
        }
    }
}

/// Draws `count` kernels; kernel `i` consumes only sub-stream `i` of the seed.
pub fn gen_kernel_pool(spec: &KernelPoolSpec) -> Result<Vec<Kernel>> {
    if spec.sigma_min <= 0.0 || spec.sigma_max < spec.sigma_min {
        return Err(Error::Parameter(format!(
            "sigma range [{}, {}] is invalid",
            spec.sigma_min, spec.sigma_max
        )));
    }
    let mut pool = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = stream_rng(spec.seed, i as u64 + 1);
        let kern = match spec.family {
            KernelFamily::GaussIso => {
                let s = rng.gen_range(spec.sigma_min..=spec.sigma_max);
                gen_gaussian_kernel(spec.size, s, s, 0.0)?
            }
            KernelFamily::GaussAniso => {
                let sx = rng.gen_range(spec.sigma_min..=spec.sigma_max);
                let sy = rng.gen_range(spec.sigma_min..=spec.sigma_max);
                let th = rng.gen_range(0.0..std::f64::consts::PI);
                gen_gaussian_kernel(spec.size, sx, sy, th)?
            }
            KernelFamily::Random => gen_random_kernel(spec.size, rng.gen(), spec.smoothness)?,
        };
        pool.push(kern);
    }
    Ok(pool)
}
