//! Independent reference implementations used to cross-check the fast paths.
//!
//! Each oracle materializes the textbook objects (patch matrices, dense
//! operators) with its own index arithmetic and shares no convolution or
//! assembly code with the production routines. They trade memory for
//! obviousness and refuse problems large enough to exhaust it.

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::linalg::{cholesky_solve, conjugate_gradient, Mat};

/// Problems with more than this many materialized patch scalars are refused.
const SIZE_GUARD: usize = 100_000_000;

/// Largest per-channel unknown count the dense normal-equation path accepts.
const DENSE_LIMIT: usize = 4096;

/// Quadruple-loop circular cross-correlation, written independently of
/// `ops::conv2d_circular`.
pub fn conv_direct(x: &Image, kern: &Kernel) -> Result<Image> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let k = kern.size();
    if k > h || k > w {
        return Err(Error::Dimension(format!(
            "kernel {k}x{k} exceeds image {h}x{w}"
        )));
    }
    let half = (k as isize - 1) / 2;
    let wrap = |v: isize, n: usize| -> usize {
        let n = n as isize;
        (((v % n) + n) % n) as usize
    };
    let mut out = Image::zeros(c, h, w);
    for ch in 0..c {
        for py in 0..h as isize {
            for px in 0..w as isize {
                let mut acc = 0.0;
                for u in 0..k as isize {
                    for v in 0..k as isize {
                        let tap = kern.get(u as usize, v as usize);
                        acc += tap * x.get(ch, wrap(py + u - half, h), wrap(px + v - half, w));
                    }
                }
                out.set(ch, py as usize, px as usize, acc);
            }
        }
    }
    Ok(out)
}

fn guard_patch_size(h: usize, w: usize, k: usize) -> Result<()> {
    if h * w * k * k > SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "patch matrix would hold {} scalars (limit {SIZE_GUARD})",
            h * w * k * k
        )));
    }
    Ok(())
}

/// Patch rows of one channel restricted to the stride-`s` sampling grid.
/// Row `m` holds the `k x k` circular neighborhood of kept pixel `m`.
fn sampled_patch_matrix(x: &Image, ch: usize, k: usize, s: usize) -> Mat {
    let (h, w) = (x.height(), x.width());
    let half = (k as isize - 1) / 2;
    let (hs, ws) = (h / s, w / s);
    let mut m = Mat::zeros(hs * ws, k * k);
    for my in 0..hs {
        for mx in 0..ws {
            let row = my * ws + mx;
            let mut col = 0;
            for u in 0..k as isize {
                for v in 0..k as isize {
                    let sy = (my * s) as isize + u - half;
                    let sx = (mx * s) as isize + v - half;
                    m.set(row, col, x.get_wrapped(ch, sy, sx));
                    col += 1;
                }
            }
        }
    }
    m
}

/// Gram matrix of the sampled patch rows, summed over channels, by explicit
/// materialization.
pub fn gram_bruteforce(x: &Image, k: usize, s: usize) -> Result<Mat> {
    validate_gram_args(x, k, s)?;
    guard_patch_size(x.height(), x.width(), k)?;
    let n = k * k;
    let mut gram = Mat::zeros(n, n);
    for ch in 0..x.channels() {
        let m = sampled_patch_matrix(x, ch, k, s);
        for row in 0..m.rows {
            let r = m.row(row);
            for a in 0..n {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    gram.data[a * n + b] += ra * r[b];
                }
            }
        }
    }
    Ok(gram)
}

/// Right-hand side `X^T M^T y` summed over channels, by explicit
/// materialization.
pub fn rhs_bruteforce(x: &Image, y: &Image, k: usize, s: usize) -> Result<Vec<f64>> {
    validate_gram_args(x, k, s)?;
    guard_patch_size(x.height(), x.width(), k)?;
    if y.channels() != x.channels()
        || y.height() != x.height() / s
        || y.width() != x.width() / s
    {
        return Err(Error::Dimension(format!(
            "observation {}x{}x{} does not match {}x{}x{} at stride {s}",
            y.channels(),
            y.height(),
            y.width(),
            x.channels(),
            x.height(),
            x.width()
        )));
    }
    let n = k * k;
    let mut rhs = vec![0.0; n];
    for ch in 0..x.channels() {
        let m = sampled_patch_matrix(x, ch, k, s);
        let obs = y.plane(ch);
        for row in 0..m.rows {
            let r = m.row(row);
            let yv = obs[row];
            for a in 0..n {
                rhs[a] += r[a] * yv;
            }
        }
    }
    Ok(rhs)
}

fn validate_gram_args(x: &Image, k: usize, s: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Parameter(format!("kernel size {k} must be odd")));
    }
    if k > x.height() || k > x.width() {
        return Err(Error::Dimension(format!(
            "kernel {k}x{k} exceeds image {}x{}",
            x.height(),
            x.width()
        )));
    }
    if s == 0 || x.height() % s != 0 || x.width() % s != 0 {
        return Err(Error::Dimension(format!(
            "extent {}x{} not divisible by stride {s}",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Dense correlation operator of one channel restricted to the sampling grid:
/// rows are kept pixels, columns are image pixels.
fn sampled_operator_matrix(kern: &Kernel, h: usize, w: usize, s: usize) -> Mat {
    let k = kern.size();
    let half = (k as isize - 1) / 2;
    let (hs, ws) = (h / s, w / s);
    let wrap = |v: isize, n: usize| -> usize {
        let n = n as isize;
        (((v % n) + n) % n) as usize
    };
    let mut m = Mat::zeros(hs * ws, h * w);
    for my in 0..hs {
        for mx in 0..ws {
            let row = my * ws + mx;
            for u in 0..k as isize {
                for v in 0..k as isize {
                    let py = wrap((my * s) as isize + u - half, h);
                    let px = wrap((mx * s) as isize + v - half, w);
                    m.data[row * h * w + py * w + px] += kern.get(u as usize, v as usize);
                }
            }
        }
    }
    m
}

/// Reference solution of the proximal deconvolution problem
/// `min_x 1/2 ||(k (*) x) downsampled - y||^2 + alpha/2 ||x - x_prev||^2`,
/// per channel, via dense normal equations (small images) or conjugate
/// gradients on the materialized operator.
pub fn solve_x_oracle(
    y: &Image,
    kern: &Kernel,
    x_prev: &Image,
    alpha: f64,
    s: usize,
) -> Result<Image> {
    let (c, h, w) = (x_prev.channels(), x_prev.height(), x_prev.width());
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha {alpha} must be positive")));
    }
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::Dimension(format!(
            "extent {h}x{w} not divisible by stride {s}"
        )));
    }
    if y.channels() != c || y.height() != h / s || y.width() != w / s {
        return Err(Error::Dimension(format!(
            "observation {}x{}x{} does not match prediction grid {c}x{}x{}",
            y.channels(),
            y.height(),
            y.width(),
            h / s,
            w / s
        )));
    }
    if h * w * kern.size() * kern.size() > SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "operator would hold {} scalars (limit {SIZE_GUARD})",
            h * w * kern.size() * kern.size()
        )));
    }
    let n = h * w;
    let op = sampled_operator_matrix(kern, h, w, s);
    let mut out = Image::zeros(c, h, w);
    for ch in 0..c {
        let rhs: Vec<f64> = {
            let mut v = op.mul_vec_t(y.plane(ch));
            for (vi, xp) in v.iter_mut().zip(x_prev.plane(ch)) {
                *vi += alpha * xp;
            }
            v
        };
        let solution = if n <= DENSE_LIMIT {
            // normal matrix D^T D + alpha I is symmetric positive definite
            let mut normal = Mat::zeros(n, n);
            for row in 0..op.rows {
                let r = op.row(row);
                for a in 0..n {
                    let ra = r[a];
                    if ra == 0.0 {
                        continue;
                    }
                    for b in 0..n {
                        normal.data[a * n + b] += ra * r[b];
                    }
                }
            }
            for i in 0..n {
                normal.data[i * n + i] += alpha;
            }
            cholesky_solve(&normal, &rhs).ok_or(Error::Singular {
                cond_estimate: f64::INFINITY,
            })?
        } else {
            conjugate_gradient(
                |v| {
                    let mut av = op.mul_vec_t(&op.mul_vec(v));
                    for (a, b) in av.iter_mut().zip(v) {
                        *a += alpha * b;
                    }
                    av
                },
                &rhs,
                1e-10,
                20 * n,
            )?
        };
        out.plane_mut(ch).copy_from_slice(&solution);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn size_guard_refuses_oversized_problems() {
        let x = Image::zeros(1, 4000, 4000, );
        assert!(matches!(
            gram_bruteforce(&x, 11, 1),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn gram_of_uniform_image_is_constant_matrix() {
        // every patch entry is 1, so every Gram entry counts the kept pixels
        let x = Image::from_vec(1, 8, 8, vec![1.0; 64]).unwrap();
        let g = gram_bruteforce(&x, 3, 2).unwrap();
        for v in &g.data {
            assert!((v - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let x = random_image(2, 12, 8, 40);
        let g = gram_bruteforce(&x, 5, 2).unwrap();
        assert!(g.max_asymmetry() < 1e-10);
        let ev = crate::linalg::sym_eigenvalues(&g);
        assert!(ev[0] > -1e-9 * g.trace() / 25.0);
    }

    #[test]
    fn solve_x_oracle_with_delta_kernel_and_s1_blends_inputs() {
        // with k = delta and s = 1 the problem is diagonal:
        // x = (y + alpha x_prev) / (1 + alpha)
        let y = random_image(1, 6, 6, 41);
        let x_prev = random_image(1, 6, 6, 42);
        let alpha = 0.7;
        let out = solve_x_oracle(&y, &Kernel::delta(3).unwrap(), &x_prev, alpha, 1).unwrap();
        for i in 0..36 {
            let expect = (y.data()[i] + alpha * x_prev.data()[i]) / (1.0 + alpha);
            assert!((out.data()[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_x_oracle_rejects_bad_alpha() {
        let y = random_image(1, 4, 4, 43);
        let x_prev = random_image(1, 4, 4, 44);
        let kern = Kernel::delta(3).unwrap();
        assert!(solve_x_oracle(&y, &kern, &x_prev, 0.0, 1).is_err());
        assert!(solve_x_oracle(&y, &kern, &x_prev, -1.0, 1).is_err());
    }
}
