//! Blind single-image super-resolution by alternating kernel estimation and
//! FFT deconvolution.
//!
//! The solver models a low-resolution observation as a circular correlation
//! of the latent image with an unknown blur kernel, followed by strided
//! sampling and additive Gaussian noise. Each unfolding stage solves two
//! proximal least-squares subproblems in closed form: a kernel update built
//! from a compact Gram system, and an image update carried out entirely in
//! the frequency domain. Prior operators (classical or loaded neural
//! weights) project the iterates between stages.
//!
//! Modules:
//! - [`ops`]: grid primitives (correlation, sampling, shuffling, bicubic, FFT)
//! - [`degrade`]: forward model and synthetic kernel generators
//! - [`kstream`] / [`xstream`]: the two per-stage data solvers
//! - [`priors`] / [`net`]: prior operators and the weight-file runtime
//! - [`unfold`]: the full alternating loop with per-stage tracing
//! - [`oracles`]: brute-force references the fast paths are tested against
//! - [`metrics`]: PSNR, SSIM, and kernel-quality scoring
//! - [`verify`]: oracle-equivalence grids and benchmark harnesses

pub mod degrade;
pub mod error;
pub mod image;
pub mod kernel_io;
pub mod kstream;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod oracles;
pub mod priors;
pub mod unfold;
pub mod verify;
pub mod xstream;

pub use error::{Error, Result};
pub use image::{Image, Kernel, Spectrum};
