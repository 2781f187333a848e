//! Kernel-stream data solver: closed-form least squares for the blur kernel
//! given the current image estimate.
//!
//! The normal equations use the Gram matrix of sampled image patches. The
//! brute-force route materializes an `(h w / s^2) x k^2` patch matrix; the
//! fast route below never does. It splits the image into its `s^2` sampling
//! phases, correlates each phase against every wrapped, shifted phase at
//! coarse lags, and interleaves those coarse maps into one merged lag map per
//! phase. Every Gram entry is then a single lookup: row `r1` of the Gram is a
//! reversed `k x k` window of the merged map selected by the sampling phase
//! of tap `r1`.
//!
//! Pixels are read in place with wrap-around indexing, so auxiliary storage
//! is just one `L x L` correlation buffer, one `(2k-1)^2` merged map, and the
//! `k^2 x k^2` output, reused across channels and phases.

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::linalg::{cholesky_solve, spd_condition, Mat};
use crate::ops::{conv2d_circular, downsample};

/// Peak auxiliary allocation bookkeeping for one Gram build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GramStats {
    /// Scalars held simultaneously by the builder, output matrix included.
    pub aux_scalars: usize,
    /// Scalars a brute-force patch materialization would hold.
    pub bruteforce_scalars: usize,
}

impl GramStats {
    /// Storage advantage of the fast path over patch materialization.
    pub fn ratio(&self) -> f64 {
        self.bruteforce_scalars as f64 / self.aux_scalars as f64
    }
}

/// Normal equations of the kernel subproblem.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub gram: Mat,
    pub rhs: Vec<f64>,
    pub kernel_size: usize,
    pub stats: GramStats,
}

fn validate_inputs(x: &Image, k: usize, s: usize) -> Result<()> {
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

/// Circular pad rounded up to a multiple of `s` that covers the kernel reach.
fn phase_pad(k: usize, s: usize) -> usize {
    s * ((k - 1).div_ceil(s))
}

/// Valid correlation of sampling phase `(i, j)` against the wrapped phase
/// `(ip, jp)` shifted by `-pad`, at every coarse lag:
/// `coarse[dy][dx] = sum_{m,n} x[m s + i, n s + j]
///                 * x[((m + dy) s + ip - pad) % h, ((n + dx) s + jp - pad) % w]`.
#[allow(clippy::too_many_arguments)]
fn correlate_phase_pair(
    x: &Image,
    ch: usize,
    s: usize,
    pad: usize,
    (i, j): (usize, usize),
    (ip, jp): (usize, usize),
    lags: usize,
    coarse: &mut [f64],
) {
    let (h, w) = (x.height(), x.width());
    let (hs, ws) = (h / s, w / s);
    let plane = x.plane(ch);
    for dy in 0..lags {
        for dx in 0..lags {
            let cx0 =
                ((dx * s + jp) as isize - pad as isize).rem_euclid(w as isize) as usize;
            let mut acc = 0.0;
            for m in 0..hs {
                let base = (m * s + i) * w;
                let ry = ((m + dy) * s + ip) as isize - pad as isize;
                let shift = ry.rem_euclid(h as isize) as usize * w;
                // stride-s walks; the shifted column wraps at most once per
                // step because s <= w
                let mut bx = j;
                let mut cx = cx0;
                for _ in 0..ws {
                    acc += plane[base + bx] * plane[shift + cx];
                    bx += s;
                    cx += s;
                    if cx >= w {
                        cx -= w;
                    }
                }
            }
            coarse[dy * lags + dx] = acc;
        }
    }
}

/// Gram matrix of sampled patch rows, summed over channels, without patch
/// materialization.
pub fn build_gram_fast(x: &Image, k: usize, s: usize) -> Result<(Mat, GramStats)> {
    validate_inputs(x, k, s)?;
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let half = (k as isize - 1) / 2;
    let pad = phase_pad(k, s);
    let lags = 2 * pad / s + 1; // coarse lag count per axis
    let merged = 2 * k - 1; // fine lag count per axis

    let mut coarse = vec![0.0; lags * lags];
    let mut fine = vec![0.0; merged * merged];
    let mut gram = Mat::zeros(k * k, k * k);
    let stats = GramStats {
        aux_scalars: coarse.len() + fine.len() + gram.data.len(),
        bruteforce_scalars: c * h * w * k * k,
    };

    for i in 0..s {
        for j in 0..s {
            fine.iter_mut().for_each(|v| *v = 0.0);
            for ch in 0..c {
                for ip in 0..s {
                    for jp in 0..s {
                        correlate_phase_pair(x, ch, s, pad, (i, j), (ip, jp), lags, &mut coarse);
                        // interleave onto the fine lag grid:
                        // lag = s * d + (phase shift) - pad, stored at lag + (k - 1)
                        let oy = ip as isize - i as isize - pad as isize + (k as isize - 1);
                        let ox = jp as isize - j as isize - pad as isize + (k as isize - 1);
                        for dy in 0..lags {
                            let fy = (s * dy) as isize + oy;
                            if fy < 0 || fy >= merged as isize {
                                continue;
                            }
                            for dx in 0..lags {
                                let fx = (s * dx) as isize + ox;
                                if fx < 0 || fx >= merged as isize {
                                    continue;
                                }
                                fine[fy as usize * merged + fx as usize] +=
                                    coarse[dy * lags + dx];
                            }
                        }
                    }
                }
            }
            // rows whose anchor tap lands on phase (i, j): entry (r1, r2) is
            // the merged-map value at lag r2 - r1
            for u1 in 0..k {
                if (u1 as isize - half).rem_euclid(s as isize) as usize != i {
                    continue;
                }
                for v1 in 0..k {
                    if (v1 as isize - half).rem_euclid(s as isize) as usize != j {
                        continue;
                    }
                    let r1 = u1 * k + v1;
                    for u2 in 0..k {
                        let fy = u2 + (k - 1) - u1;
                        for v2 in 0..k {
                            let fx = v2 + (k - 1) - v1;
                            gram.data[r1 * k * k + u2 * k + v2] = fine[fy * merged + fx];
                        }
                    }
                }
            }
        }
    }
    Ok((gram, stats))
}

/// Right-hand side of the kernel normal equations, summed over channels:
/// the observation correlated against the image on the sampling grid.
pub fn build_rhs_fast(x: &Image, y: &Image, k: usize, s: usize) -> Result<Vec<f64>> {
    validate_inputs(x, k, s)?;
    if y.channels() != x.channels()
        || y.height() * s != x.height()
        || y.width() * s != x.width()
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
    let half = (k as isize - 1) / 2;
    let (hs, ws) = (y.height(), y.width());
    let mut rhs = vec![0.0; k * k];
    for ch in 0..x.channels() {
        let obs = y.plane(ch);
        for u in 0..k {
            let du = u as isize - half;
            for v in 0..k {
                let dv = v as isize - half;
                let mut acc = 0.0;
                for m in 0..hs {
                    let sy = (m * s) as isize + du;
                    for n in 0..ws {
                        let sx = (n * s) as isize + dv;
                        acc += obs[m * ws + n] * x.get_wrapped(ch, sy, sx);
                    }
                }
                rhs[u * k + v] += acc;
            }
        }
    }
    Ok(rhs)
}

/// Builds both sides of the kernel normal equations.
pub fn build_gram_system(x: &Image, y: &Image, k: usize, s: usize) -> Result<GramSystem> {
    let (gram, stats) = build_gram_fast(x, k, s)?;
    let rhs = build_rhs_fast(x, y, k, s)?;
    Ok(GramSystem {
        gram,
        rhs,
        kernel_size: k,
        stats,
    })
}

/// Relative ridge floor added to the Gram diagonal before factorization.
const RIDGE_FLOOR: f64 = 1e-10;
/// Multiplier applied to the ridge on factorization failure.
const RIDGE_ESCALATION: f64 = 100.0;
/// Factorization retries before giving up as singular.
const RIDGE_RETRIES: usize = 2;

/// Closed-form kernel update: minimizes
/// `1/2 ||(k (*) x) downsampled - y||^2 + alpha_k/2 ||k - k_prev||^2`.
///
/// A ridge of `1e-10 * trace(A) / k^2`, centered on `k_prev`, keeps the
/// factorization alive on rank-deficient textures; it escalates by 100x on
/// failure, at most twice. One refinement step against the unridged system
/// then removes the ridge bias quadratically. Centering on `k_prev` plus
/// the shared eigenbasis of the ridged and true systems keep the returned
/// kernel from ever scoring worse than `k_prev` on the objective above.
pub fn solve_k_data(y: &Image, k_prev: &Kernel, x: &Image, alpha_k: f64) -> Result<Kernel> {
    if alpha_k < 0.0 || !alpha_k.is_finite() {
        return Err(Error::Parameter(format!(
            "alpha_k {alpha_k} must be nonnegative"
        )));
    }
    if y.height() == 0 || x.height() % y.height() != 0 {
        return Err(Error::Dimension(format!(
            "image height {} not a multiple of observation height {}",
            x.height(),
            y.height()
        )));
    }
    let s = x.height() / y.height();
    if y.width() * s != x.width() {
        return Err(Error::Dimension(format!(
            "scale from heights is {s} but widths are {} vs {}",
            x.width(),
            y.width()
        )));
    }
    let k = k_prev.size();
    let system = build_gram_system(x, y, k, s)?;
    let n = k * k;
    let mut ridge = RIDGE_FLOOR * system.gram.trace() / n as f64;
    for attempt in 0..=RIDGE_RETRIES {
        let mut m = system.gram.clone();
        for i in 0..n {
            m.data[i * n + i] += alpha_k + ridge;
        }
        let rhs: Vec<f64> = system
            .rhs
            .iter()
            .zip(k_prev.taps())
            .map(|(b, kp)| b + (alpha_k + ridge) * kp)
            .collect();
        if let Some(mut solution) = cholesky_solve(&m, &rhs) {
            // residual of the anchored system without the ridge; one
            // corrected step leaves only O(ridge^2) bias in the solution
            let a_sol = system.gram.mul_vec(&solution);
            let residual: Vec<f64> = (0..n)
                .map(|i| {
                    system.rhs[i] + alpha_k * (k_prev.taps()[i] - solution[i]) - a_sol[i]
                })
                .collect();
            if let Some(correction) = cholesky_solve(&m, &residual) {
                for (si, ci) in solution.iter_mut().zip(&correction) {
                    *si += ci;
                }
            }
            return Kernel::from_vec(k, solution);
        }
        if attempt < RIDGE_RETRIES {
            ridge *= RIDGE_ESCALATION;
        }
    }
    Err(Error::Singular {
        cond_estimate: spd_condition(&system.gram),
    })
}

/// Kernel subproblem objective, evaluated through the forward model.
pub fn k_data_objective(
    y: &Image,
    kern: &Kernel,
    x: &Image,
    alpha_k: f64,
    k_prev: &Kernel,
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
    let prox: f64 = kern
        .taps()
        .iter()
        .zip(k_prev.taps())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * data + 0.5 * alpha_k * prox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{degrade, gen_gaussian_kernel, DegradationSpec};
    use crate::oracles::{gram_bruteforce, rhs_bruteforce};
    use rand::{Rng, SeedableRng};

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_vec(c, h, w, data).unwrap()
    }

    fn rel_frobenius(a: &Mat, b: &Mat) -> f64 {
        let num: f64 = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let den: f64 = b.data.iter().map(|v| v * v).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    #[test]
    fn gram_matches_bruteforce_on_sampled_cells() {
        for (c, h, w, k, s, seed) in [
            (1, 8, 8, 3, 1, 1u64),
            (1, 8, 8, 5, 2, 2),
            (1, 8, 8, 7, 4, 3),
            (3, 12, 8, 3, 2, 4),
            (1, 12, 12, 11, 3, 5),
            (3, 16, 12, 11, 1, 6),
            (1, 24, 16, 7, 4, 7),
            (1, 8, 12, 1, 2, 8),
        ] {
            let x = random_image(c, h, w, seed);
            let (fast, _) = build_gram_fast(&x, k, s).unwrap();
            let brute = gram_bruteforce(&x, k, s).unwrap();
            let err = rel_frobenius(&fast, &brute);
            assert!(err < 1e-12, "c={c} h={h} w={w} k={k} s={s}: err {err}");
        }
    }

    #[test]
    fn rhs_matches_bruteforce() {
        for (c, h, w, k, s, seed) in [(1, 8, 8, 3, 2, 11u64), (3, 16, 12, 5, 2, 12), (2, 12, 12, 7, 3, 13)]
        {
            let x = random_image(c, h, w, seed);
            let y = random_image(c, h / s, w / s, seed + 50);
            let fast = build_rhs_fast(&x, &y, k, s).unwrap();
            let brute = rhs_bruteforce(&x, &y, k, s).unwrap();
            let num: f64 = fast
                .iter()
                .zip(&brute)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let den: f64 = brute.iter().map(|v| v * v).sum();
            assert!((num / den).sqrt() < 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        let x = random_image(2, 16, 16, 21);
        let (gram, _) = build_gram_fast(&x, 5, 2).unwrap();
        assert!(gram.max_asymmetry() < 1e-10);
        let ev = crate::linalg::sym_eigenvalues(&gram);
        assert!(ev[0] >= -1e-9 * gram.trace() / 25.0);
    }

    #[test]
    fn memory_stays_within_law_bound() {
        for (h, w, k, s) in [
            (8, 8, 7, 1),
            (8, 8, 7, 4),
            (12, 12, 11, 4),
            (32, 32, 11, 1),
            (24, 32, 7, 2),
            (64, 64, 11, 2),
        ] {
            let x = random_image(1, h, w, 31);
            let (_, stats) = build_gram_fast(&x, k, s).unwrap();
            // s^2 (h/s) (w/s) + k^4 in observation dims, times 1.5 slack
            let k4 = (k * k * k * k) as f64;
            let bound = 1.5 * ((h * w) as f64 + k4);
            assert!(
                (stats.aux_scalars as f64) <= bound,
                "h={h} w={w} k={k} s={s}: aux {} > bound {bound}",
                stats.aux_scalars
            );
            assert_eq!(stats.bruteforce_scalars, h * w * k * k);
        }
    }

    #[test]
    fn noiseless_recovery_is_exact_to_tolerance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        for trial in 0..8 {
            let k = [3, 5][trial % 2];
            let s = [1, 2][(trial / 2) % 2];
            let x = random_image(1, 32, 32, 1000 + trial as u64);
            let taps: Vec<f64> = (0..k * k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum: f64 = taps.iter().sum();
            let truth = Kernel::from_vec(k, taps.iter().map(|t| t / sum).collect()).unwrap();
            let y = degrade(
                &x,
                &DegradationSpec {
                    kernel: truth.clone(),
                    scale: s,
                    sigma255: 0.0,
                    seed: 0,
                },
            )
            .unwrap();
            let est = solve_k_data(&y, &Kernel::flat(k).unwrap(), &x, 0.0).unwrap();
            let err = est
                .taps()
                .iter()
                .zip(truth.taps())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-6, "trial {trial}: max abs err {err}");
        }
    }

    #[test]
    fn solution_gradient_is_negligible() {
        let x = random_image(1, 24, 24, 60);
        let y = random_image(1, 12, 12, 61);
        let k_prev = Kernel::flat(5).unwrap();
        let alpha = 0.3;
        let est = solve_k_data(&y, &k_prev, &x, alpha).unwrap();
        let system = build_gram_system(&x, &y, 5, 2).unwrap();
        let ak = system.gram.mul_vec(est.taps());
        let grad_norm: f64 = ak
            .iter()
            .zip(&system.rhs)
            .zip(est.taps())
            .zip(k_prev.taps())
            .map(|(((aki, bi), ki), kpi)| {
                let g = aki - bi + alpha * (ki - kpi);
                g * g
            })
            .sum::<f64>()
            .sqrt();
        let a_norm: f64 = system.gram.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k_norm: f64 = est.taps().iter().map(|v| v * v).sum::<f64>().sqrt();
        let b_norm: f64 = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(grad_norm <= 1e-8 * (a_norm * k_norm + b_norm));
    }

    #[test]
    fn objective_never_increases_over_previous_kernel() {
        for trial in 0..6 {
            let x = random_image(1, 16, 16, 200 + trial);
            let y = random_image(1, 8, 8, 300 + trial);
            let k_prev = gen_gaussian_kernel(5, 1.0 + trial as f64 * 0.2, 1.0, 0.1).unwrap();
            for alpha in [0.0, 0.05, 1.0, 50.0] {
                let est = solve_k_data(&y, &k_prev, &x, alpha).unwrap();
                let before = k_data_objective(&y, &k_prev, &x, alpha, &k_prev).unwrap();
                let after = k_data_objective(&y, &est, &x, alpha, &k_prev).unwrap();
                assert!(
                    after <= before * (1.0 + 1e-9) + 1e-12,
                    "trial {trial} alpha {alpha}: {after} > {before}"
                );
            }
        }
    }

    #[test]
    fn large_alpha_returns_previous_kernel() {
        let x = random_image(1, 16, 16, 70);
        let y = random_image(1, 8, 8, 71);
        let k_prev = gen_gaussian_kernel(5, 1.4, 1.4, 0.0).unwrap();
        let est = solve_k_data(&y, &k_prev, &x, 1e12).unwrap();
        let err = est
            .taps()
            .iter()
            .zip(k_prev.taps())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn zero_image_with_zero_alpha_is_singular() {
        let x = Image::zeros(1, 8, 8);
        let y = Image::zeros(1, 4, 4);
        let err = solve_k_data(&y, &Kernel::flat(3).unwrap(), &x, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn mismatched_scale_is_rejected() {
        let x = random_image(1, 16, 16, 80);
        let y = random_image(1, 8, 7, 81);
        assert!(solve_k_data(&y, &Kernel::flat(3).unwrap(), &x, 0.1).is_err());
    }
}
