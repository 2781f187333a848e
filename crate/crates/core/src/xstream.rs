//! Image-stream data solver: proximal deconvolution carried out entirely in
//! the frequency domain.
//!
//! For stride 1 the per-frequency normal equations are scalar and the update
//! is a single pointwise formula. For stride `s > 1` the sampling operator
//! couples the `s^2` frequencies that alias onto each coarse bin; the
//! coupled system has rank-one structure per alias group, so one
//! Sherman-Morrison step solves it with two block-averaged planes instead of
//! a dense factorization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{Image, Kernel, Spectrum};
use crate::ops::fft::{fft2, ifft2_real, psf2otf};
use crate::ops::{conv2d_circular, downsample};

/// Closed-form image update: minimizes
/// `1/2 ||(k (*) x) downsampled - y||^2 + alpha_x/2 ||x - x_prev||^2`.
pub fn solve_x_data(y: &Image, kern: &Kernel, x_prev: &Image, alpha_x: f64) -> Result<Image> {
    if alpha_x <= 0.0 || !alpha_x.is_finite() {
        return Err(Error::Parameter(format!(
            "alpha_x {alpha_x} must be positive"
        )));
    }
    let (c, h, w) = (x_prev.channels(), x_prev.height(), x_prev.width());
    if y.channels() != c || y.height() == 0 || h % y.height() != 0 {
        return Err(Error::Dimension(format!(
            "observation {}x{}x{} incompatible with prediction {c}x{h}x{w}",
            y.channels(),
            y.height(),
            y.width()
        )));
    }
    let s = h / y.height();
    if y.width() * s != w {
        return Err(Error::Dimension(format!(
            "scale from heights is {s} but widths are {w} vs {}",
            y.width()
        )));
    }
    let otf = psf2otf(kern, h, w)?;
    let mut out = Image::zeros(c, h, w);
    for ch in 0..c {
        let upsampled = zero_upsample_plane(y, ch, s);
        let obs_spec = fft2(&upsampled, h, w)?;
        let prev_spec = fft2(x_prev.plane(ch), h, w)?;
        let solution = if s == 1 {
            solve_plane_direct(&obs_spec, &prev_spec, &otf, alpha_x)
        } else {
            solve_plane_aliased(&obs_spec, &prev_spec, &otf, alpha_x, s)
        };
        out.plane_mut(ch).copy_from_slice(&ifft2_real(&solution));
    }
    Ok(out)
}

fn zero_upsample_plane(y: &Image, ch: usize, s: usize) -> Vec<f64> {
    let (hs, ws) = (y.height(), y.width());
    let mut plane = vec![0.0; hs * s * ws * s];
    let src = y.plane(ch);
    for m in 0..hs {
        for n in 0..ws {
            plane[(m * s) * ws * s + n * s] = src[m * ws + n];
        }
    }
    plane
}

/// Stride-1 pointwise solve: per frequency, `x = z - conj(K) K z / (alpha + |K|^2)`
/// scaled by `1 / alpha`, with `z = conj(K) y + alpha x_prev`.
fn solve_plane_direct(
    obs: &Spectrum,
    prev: &Spectrum,
    otf: &Spectrum,
    alpha: f64,
) -> Spectrum {
    let (h, w) = (obs.height(), obs.width());
    let mut out = Spectrum::zeros(h, w);
    for idx in 0..h * w {
        let k = otf.bins()[idx];
        let z = k.conj() * obs.bins()[idx] + alpha * prev.bins()[idx];
        let val = (z - k.conj() * (k * z) / (alpha + k.norm_sqr())) / alpha;
        out.bins_mut()[idx] = val;
    }
    out
}

/// Stride-`s` solve. Frequencies `(r + i h/s, t + j w/s)` alias onto coarse
/// bin `(r, t)`; sampling averages each alias group, so the normal equations
/// are `alpha x + conj(K)/s^2 * groupsum(K x) = z`. Sherman-Morrison on the
/// rank-one group coupling gives the update from two block means.
fn solve_plane_aliased(
    obs: &Spectrum,
    prev: &Spectrum,
    otf: &Spectrum,
    alpha: f64,
    s: usize,
) -> Spectrum {
    let (h, w) = (obs.height(), obs.width());
    let (hs, ws) = (h / s, w / s);
    let mut z = Spectrum::zeros(h, w);
    for idx in 0..h * w {
        let k = otf.bins()[idx];
        z.bins_mut()[idx] = k.conj() * obs.bins()[idx] + alpha * prev.bins()[idx];
    }
    // block means over alias groups of K z and |K|^2
    let zero = Complex64::new(0.0, 0.0);
    let mut num = vec![zero; hs * ws];
    let mut den = vec![0.0; hs * ws];
    for yy in 0..h {
        let ry = yy % hs;
        for xx in 0..w {
            let rx = xx % ws;
            let k = otf.get(yy, xx);
            num[ry * ws + rx] += k * z.get(yy, xx);
            den[ry * ws + rx] += k.norm_sqr();
        }
    }
    let groups = (s * s) as f64;
    let mut out = Spectrum::zeros(h, w);
    for yy in 0..h {
        let ry = yy % hs;
        for xx in 0..w {
            let rx = xx % ws;
            let inner = (num[ry * ws + rx] / groups) / (alpha + den[ry * ws + rx] / groups);
            let k = otf.get(yy, xx);
            out.set(yy, xx, (z.get(yy, xx) - k.conj() * inner) / alpha);
        }
    }
    out
}

/// Image subproblem objective, evaluated through the forward model.
pub fn x_data_objective(
    y: &Image,
    kern: &Kernel,
    x: &Image,
    alpha_x: f64,
    x_prev: &Image,
) -> Result<f64> {
    let s = x.height() / y.height().max(1);
    let pred = downsample(&conv2d_circular(x, kern)?, s, (0, 0))?;
    pred.require_same_shape(y)?;
    let data: f64 = pred
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let prox: f64 = x
        .data()
        .iter()
        .zip(x_prev.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * data + 0.5 * alpha_x * prox)
}
