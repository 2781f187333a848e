//! Sampling-grid primitives shared by the degradation model and both solver
//! streams: circular correlation, strided sampling, sub-pixel rearrangement,
//! patch extraction, and bicubic interpolation.
//!
//! Convolution is cross-correlation throughout: the kernel is applied without
//! flipping, with circular boundary handling and the center tap at
//! `(k - 1) / 2`.

pub mod fft;

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::linalg::Mat;

/// Circular cross-correlation of every channel with a single kernel.
pub fn conv2d_circular(x: &Image, kern: &Kernel) -> Result<Image> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let k = kern.size();
    if k > h || k > w {
        return Err(Error::Dimension(format!(
            "kernel {k}x{k} exceeds image {h}x{w}"
        )));
    }
    let off = kern.center() as isize;
    let mut out = Image::zeros(c, h, w);
    for ch in 0..c {
        for py in 0..h {
            for px in 0..w {
                let mut acc = 0.0;
                for u in 0..k {
                    let sy = py as isize + u as isize - off;
                    for v in 0..k {
                        let sx = px as isize + v as isize - off;
                        acc += kern.get(u, v) * x.get_wrapped(ch, sy, sx);
                    }
                }
                out.set(ch, py, px, acc);
            }
        }
    }
    Ok(out)
}

/// Keeps every `s`-th pixel starting at `offset`; output is `(h/s) x (w/s)`.
pub fn downsample(x: &Image, s: usize, offset: (usize, usize)) -> Result<Image> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    require_scale(h, w, s)?;
    let (oy, ox) = offset;
    if oy >= s || ox >= s {
        return Err(Error::Parameter(format!(
            "offset ({oy}, {ox}) outside stride {s}"
        )));
    }
    let (hs, ws) = (h / s, w / s);
    let mut out = Image::zeros(c, hs, ws);
    for ch in 0..c {
        for my in 0..hs {
            for mx in 0..ws {
                out.set(ch, my, mx, x.get(ch, my * s + oy, mx * s + ox));
            }
        }
    }
    Ok(out)
}

/// Adjoint of `downsample` at offset (0, 0): scatters pixels onto the stride
/// grid and fills the rest with zeros.
pub fn zero_upsample(y: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    let (c, hs, ws) = (y.channels(), y.height(), y.width());
    let mut out = Image::zeros(c, hs * s, ws * s);
    for ch in 0..c {
        for my in 0..hs {
            for mx in 0..ws {
                out.set(ch, my * s, mx * s, y.get(ch, my, mx));
            }
        }
    }
    Ok(out)
}

/// Moves each `s x s` sub-pixel position into its own channel. Channel order
/// for input channel `c` and sub-pixel `(i, j)` is `c * s^2 + i * s + j`.
pub fn pixel_unshuffle(x: &Image, s: usize) -> Result<Image> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    require_scale(h, w, s)?;
    let (hs, ws) = (h / s, w / s);
    let mut out = Image::zeros(c * s * s, hs, ws);
    for ch in 0..c {
        for i in 0..s {
            for j in 0..s {
                let oc = ch * s * s + i * s + j;
                for my in 0..hs {
                    for mx in 0..ws {
                        out.set(oc, my, mx, x.get(ch, my * s + i, mx * s + j));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of `pixel_unshuffle`: interleaves `s^2` channel groups back onto
/// the fine grid.
pub fn pixel_shuffle(x: &Image, s: usize) -> Result<Image> {
    let (c, hs, ws) = (x.channels(), x.height(), x.width());
    if s == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    if c % (s * s) != 0 {
        return Err(Error::Dimension(format!(
            "{c} channels not divisible by s^2 = {}",
            s * s
        )));
    }
    let co = c / (s * s);
    let mut out = Image::zeros(co, hs * s, ws * s);
    for ch in 0..co {
        for i in 0..s {
            for j in 0..s {
                let ic = ch * s * s + i * s + j;
                for my in 0..hs {
                    for mx in 0..ws {
                        out.set(ch, my * s + i, mx * s + j, x.get(ic, my, mx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel patch matrix: row `p` lists the `a x a` neighborhood centered
/// at pixel `p` (row-major patch order) with circular boundary handling.
pub fn im2col(x: &Image, block: usize) -> Result<Vec<Mat>> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    if block == 0 || block % 2 == 0 {
        return Err(Error::Parameter(format!("block size {block} must be odd")));
    }
    let off = ((block - 1) / 2) as isize;
    let mut mats = Vec::with_capacity(c);
    for ch in 0..c {
        let mut m = Mat::zeros(h * w, block * block);
        for py in 0..h {
            for px in 0..w {
                let row = py * w + px;
                let mut col = 0;
                for u in 0..block {
                    let sy = py as isize + u as isize - off;
                    for v in 0..block {
                        let sx = px as isize + v as isize - off;
                        m.set(row, col, x.get_wrapped(ch, sy, sx));
                        col += 1;
                    }
                }
            }
        }
        mats.push(m);
    }
    Ok(mats)
}

/// Integer-factor bicubic upsampling (Catmull-Rom weights, a = -0.5),
/// separable rows-then-columns, edge samples clamped.
pub fn bicubic_upsample(y: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::Parameter("scale must be at least 1".into()));
    }
    let (c, hs, ws) = (y.channels(), y.height(), y.width());
    if s == 1 {
        return Ok(y.clone());
    }
    let (h, w) = (hs * s, ws * s);
    let mut out = Image::zeros(c, h, w);
    for ch in 0..c {
        // rows first: hs x ws -> hs x w
        let mut wide = vec![0.0; hs * w];
        for r in 0..hs {
            let src: Vec<f64> = (0..ws).map(|i| y.get(ch, r, i)).collect();
            let dst = bicubic_line(&src, s);
            wide[r * w..(r + 1) * w].copy_from_slice(&dst);
        }
        // then columns: hs x w -> h x w
        for col in 0..w {
            let src: Vec<f64> = (0..hs).map(|r| wide[r * w + col]).collect();
            let dst = bicubic_line(&src, s);
            for (r, v) in dst.iter().enumerate() {
                out.set(ch, r, col, *v);
            }
        }
    }
    Ok(out)
}

/// Catmull-Rom cubic weight.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

fn bicubic_line(src: &[f64], s: usize) -> Vec<f64> {
    let n = src.len();
    let mut out = vec![0.0; n * s];
    for (u, o) in out.iter_mut().enumerate() {
        let t = u as f64 / s as f64;
        let base = t.floor() as isize;
        let mut acc = 0.0;
        for m in (base - 1)..(base + 3) {
            let clamped = m.clamp(0, n as isize - 1) as usize;
            acc += src[clamped] * cubic_weight(t - m as f64);
        }
        *o = acc;
    }
    out
}

fn require_scale(h: usize, w: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    if h % s != 0 || w % s != 0 {
        return Err(Error::Dimension(format!(
            "extent {h}x{w} not divisible by stride {s}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::conv_direct;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Image::from_vec(c, h, w, data).unwrap()
    }

    fn random_kernel(k: usize, seed: u64) -> Kernel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Kernel::from_vec(k, data).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = random_image(2, 8, 6, 1);
        let out = conv2d_circular(&x, &Kernel::delta(5).unwrap()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_matches_independent_oracle() {
        for (h, w, k, seed) in [(8, 8, 3, 2), (8, 12, 5, 3), (16, 16, 7, 4), (16, 12, 11, 5)] {
            let x = random_image(2, h, w, seed);
            let kern = random_kernel(k, seed + 100);
            let fast = conv2d_circular(&x, &kern).unwrap();
            let slow = conv_direct(&x, &kern).unwrap();
            let err = fast
                .data()
                .iter()
                .zip(slow.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "h={h} w={w} k={k}: err {err}");
        }
    }

    #[test]
    fn conv_is_unflipped_correlation() {
        // kernel with a single off-center tap at (u, v) = (0, 1) reads the
        // pixel one column right and one row up from the output position
        let mut x = Image::zeros(1, 4, 4);
        x.set(0, 1, 2, 1.0);
        let mut kern = Kernel::from_vec(3, vec![0.0; 9]).unwrap();
        kern.set(0, 1, 1.0);
        let out = conv2d_circular(&x, &kern).unwrap();
        assert_eq!(out.get(0, 2, 2), 1.0);
        assert_eq!(out.get(0, 1, 2), 0.0);
    }

    #[test]
    fn kernel_larger_than_image_is_rejected() {
        let x = random_image(1, 4, 4, 7);
        assert!(conv2d_circular(&x, &random_kernel(5, 8)).is_err());
    }

    #[test]
    fn downsample_respects_offset() {
        let x = Image::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(downsample(&x, 2, (0, 0)).unwrap().get(0, 0, 0), 1.0);
        assert_eq!(downsample(&x, 2, (1, 1)).unwrap().get(0, 0, 0), 4.0);
        assert!(downsample(&x, 2, (2, 0)).is_err());
        let odd = Image::zeros(1, 3, 4);
        assert!(downsample(&odd, 2, (0, 0)).is_err());
    }

    #[test]
    fn zero_upsample_is_downsample_adjoint() {
        // <S x, y> == <x, S^T y> for the sampling operator S
        let x = random_image(1, 12, 8, 11);
        let y = random_image(1, 6, 4, 12);
        let sx = downsample(&x, 2, (0, 0)).unwrap();
        let sty = zero_upsample(&y, 2).unwrap();
        let lhs: f64 = sx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(sty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn unshuffle_known_values() {
        let x = Image::from_vec(1, 4, 4, (0..16).map(|v| v as f64).collect()).unwrap();
        let u = pixel_unshuffle(&x, 2).unwrap();
        assert_eq!(u.plane(0), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(u.plane(1), &[1.0, 3.0, 9.0, 11.0]);
        assert_eq!(u.plane(2), &[4.0, 6.0, 12.0, 14.0]);
        assert_eq!(u.plane(3), &[5.0, 7.0, 13.0, 15.0]);
    }

    proptest! {
        #[test]
        fn shuffle_roundtrip_is_exact(seed in 0u64..500, s in 1usize..4, c in 1usize..3) {
            let x = random_image(c, 6 * s, 4 * s, seed);
            let back = pixel_shuffle(&pixel_unshuffle(&x, s).unwrap(), s).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn downsample_of_zero_upsample_roundtrips(seed in 0u64..500, s in 1usize..5) {
            let y = random_image(1, 5, 7, seed);
            let back = downsample(&zero_upsample(&y, s).unwrap(), s, (0, 0)).unwrap();
            prop_assert_eq!(back, y);
        }
    }

    #[test]
    fn im2col_block_one_enumerates_pixels() {
        let x = random_image(1, 3, 5, 20);
        let m = im2col(&x, 1).unwrap().remove(0);
        assert_eq!(m.rows, 15);
        assert_eq!(m.cols, 1);
        for p in 0..15 {
            assert_eq!(m.get(p, 0), x.data()[p]);
        }
    }

    #[test]
    fn im2col_rows_reproduce_convolution() {
        let x = random_image(1, 6, 7, 21);
        let kern = random_kernel(3, 22);
        let m = im2col(&x, 3).unwrap().remove(0);
        let conv = conv2d_circular(&x, &kern).unwrap();
        for p in 0..42 {
            let dot: f64 = m.row(p).iter().zip(kern.taps()).map(|(a, b)| a * b).sum();
            assert!((dot - conv.data()[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_rejects_even_block() {
        let x = random_image(1, 4, 4, 23);
        assert!(im2col(&x, 2).is_err());
    }

    #[test]
    fn bicubic_reproduces_linear_ramp_interior() {
        // a ramp along x stays a ramp away from the clamped borders
        let mut y = Image::zeros(1, 6, 6);
        for r in 0..6 {
            for c in 0..6 {
                y.set(0, r, c, c as f64);
            }
        }
        let up = bicubic_upsample(&y, 2).unwrap();
        for r in 0..12 {
            for c in 4..8 {
                let expect = c as f64 / 2.0;
                assert!(
                    (up.get(0, r, c) - expect).abs() < 1e-12,
                    "r={r} c={c} got {}",
                    up.get(0, r, c)
                );
            }
        }
    }

    #[test]
    fn bicubic_interpolates_source_exactly_at_knots() {
        let y = random_image(2, 5, 6, 30);
        for s in [1usize, 2, 3, 4] {
            let up = bicubic_upsample(&y, s).unwrap();
            let back = downsample(&up, s, (0, 0)).unwrap();
            assert_eq!(back, y, "s={s}");
        }
    }
}
