//! Unnormalized 2-D DFT wrappers and spatial-to-frequency kernel embedding.
//!
//! `fft2` is the plain forward transform; `ifft2` divides by `h * w` so the
//! pair round-trips. `psf2otf` produces the multiplier that makes pointwise
//! spectral products equal `conv2d_circular` (unflipped correlation), which
//! requires embedding the reflected kernel with its center tap at index
//! (0, 0).

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{Kernel, Spectrum};

/// Forward 2-D DFT of one real plane.
pub fn fft2(plane: &[f64], height: usize, width: usize) -> Result<Spectrum> {
    if plane.len() != height * width {
        return Err(Error::Dimension(format!(
            "plane of {} values is not {height}x{width}",
            plane.len()
        )));
    }
    let data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut spec = Spectrum::from_vec(height, width, data)?;
    transform2d(&mut spec, rustfft::FftDirection::Forward);
    Ok(spec)
}

/// Inverse 2-D DFT, normalized by `h * w`; returns the complex plane.
pub fn ifft2(spec: &Spectrum) -> Vec<Complex64> {
    let mut out = spec.clone();
    transform2d(&mut out, rustfft::FftDirection::Inverse);
    let scale = 1.0 / (spec.height() * spec.width()) as f64;
    out.bins_mut().iter_mut().for_each(|v| *v *= scale);
    out.bins().to_vec()
}

/// Inverse 2-D DFT keeping only the real part.
pub fn ifft2_real(spec: &Spectrum) -> Vec<f64> {
    ifft2(spec).iter().map(|v| v.re).collect()
}

/// Optical transfer function of a spatial kernel on an `h x w` grid.
///
/// The kernel is embedded rotated by 180 degrees with its center at (0, 0)
/// and wrapped circularly, so that for any image plane `x`:
/// `ifft2(psf2otf(k) * fft2(x)) == conv2d_circular(x, k)`.
pub fn psf2otf(kern: &Kernel, height: usize, width: usize) -> Result<Spectrum> {
    let k = kern.size();
    if k > height || k > width {
        return Err(Error::Dimension(format!(
            "kernel {k}x{k} exceeds grid {height}x{width}"
        )));
    }
    let c = kern.center() as isize;
    let mut canvas = vec![0.0; height * width];
    for i in 0..k {
        let y = (c - i as isize).rem_euclid(height as isize) as usize;
        for j in 0..k {
            let x = (c - j as isize).rem_euclid(width as isize) as usize;
            canvas[y * width + x] += kern.get(i, j);
        }
    }
    fft2(&canvas, height, width)
}

/// Row-column decomposition of the 2-D transform.
fn transform2d(spec: &mut Spectrum, direction: rustfft::FftDirection) {
    let (h, w) = (spec.height(), spec.width());
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    for row in spec.bins_mut().chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = spec.get(y, x);
        }
        col_fft.process(&mut col);
        for y in 0..h {
            spec.set(y, x, col[y]);
        }
    }
}
