//! End-to-end runs through the public API only: synthesize a scene, degrade
//! it, estimate, and check the estimate beats its own initialization. Also
//! pins determinism of the whole chain and exact round-trips of the kernel
//! text format.

use proptest::prelude::*;
use udke_core::degrade::{
    degrade, gen_kernel_pool, gen_smooth_texture, DegradationSpec, KernelFamily, KernelPoolSpec,
};
use udke_core::kernel_io::{kernel_from_text, kernel_to_text};
use udke_core::metrics::{kernel_psnr, psnr, ssim};
use udke_core::unfold::{run_udke, UnfoldConfig};
use udke_core::{Image, Kernel};

fn scene(channels: usize, seed: u64) -> Image {
    gen_smooth_texture(channels, 32, 32, 0.9, seed).unwrap()
}

fn observe(truth: &Image, kernel: &Kernel, sigma255: f64, seed: u64) -> Image {
    let spec = DegradationSpec {
        kernel: kernel.clone(),
        scale: 2,
        sigma255,
        seed,
    };
    degrade(truth, &spec).unwrap()
}

#[test]
fn estimate_beats_bicubic_and_flat_start() {
    let truth = scene(1, 11);
    let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::GaussAniso, 11, 1, 5)).unwrap();
    let y = observe(&truth, &pool[0], 0.0, 11);

    let out = run_udke(&y, &UnfoldConfig::new(2)).unwrap();
    assert_eq!(out.image.height(), 32);
    assert_eq!(out.image.width(), 32);
    assert_eq!(out.trace.stages.len(), 6);

    let sr = psnr(&out.image, &truth, 1.0).unwrap();
    let base = psnr(&out.init, &truth, 1.0).unwrap();
    assert!(sr > base, "psnr {sr:.2} must beat bicubic {base:.2}");
    assert!(ssim(&out.image, &truth, 1.0).unwrap() > ssim(&out.init, &truth, 1.0).unwrap());

    let est = kernel_psnr(&out.kernel, &pool[0]).unwrap();
    let flat = kernel_psnr(&Kernel::flat(11).unwrap(), &pool[0]).unwrap();
    assert!(est > flat, "kernel psnr {est:.2} must beat flat {flat:.2}");
}

#[test]
fn three_channel_estimation_shares_one_kernel() {
    let truth = scene(3, 23);
    let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::GaussIso, 7, 1, 9)).unwrap();
    let y = observe(&truth, &pool[0], 0.0, 23);

    let mut cfg = UnfoldConfig::new(2);
    cfg.kernel_size = 7;
    let out = run_udke(&y, &cfg).unwrap();
    assert_eq!(out.image.channels(), 3);

    let sum: f64 = out.kernel.taps().iter().sum();
    assert!((sum - 1.0).abs() < 1e-12, "kernel sum {sum} drifted from 1");
    assert!(psnr(&out.image, &truth, 1.0).unwrap() > psnr(&out.init, &truth, 1.0).unwrap());
}

#[test]
fn whole_chain_is_deterministic() {
    let truth = scene(1, 40);
    let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::Random, 7, 1, 40)).unwrap();
    let run = || {
        let y = observe(&truth, &pool[0], 2.0, 40);
        run_udke(&y, &UnfoldConfig::new(2)).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.image.data(), b.image.data());
    assert_eq!(a.kernel.taps(), b.kernel.taps());
}

#[test]
fn residual_shrinks_across_stages() {
    let truth = scene(1, 61);
    let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::GaussAniso, 11, 1, 61)).unwrap();
    let y = observe(&truth, &pool[0], 0.0, 61);

    let out = run_udke(&y, &UnfoldConfig::new(2)).unwrap();
    let first = out.trace.stages.first().unwrap().residual;
    let last = out.trace.stages.last().unwrap().residual;
    assert!(
        last < first,
        "stage residual must shrink: first {first:.3e}, last {last:.3e}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // 17 significant digits in the text format make the f64 round-trip exact.
    #[test]
    fn kernel_text_round_trip_is_exact(seed in 0u64..1000, size in prop::sample::select(vec![3usize, 5, 7, 11])) {
        let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::Random, size, 1, seed)).unwrap();
        let text = kernel_to_text(&pool[0], &["round trip".into()]);
        let back = kernel_from_text(&text).unwrap();
        prop_assert_eq!(back.taps(), pool[0].taps());
    }

    #[test]
    fn degradation_depends_on_noise_seed_only_through_noise(seed in 0u64..500) {
        let truth = scene(1, seed);
        let pool = gen_kernel_pool(&KernelPoolSpec::new(KernelFamily::GaussIso, 5, 1, seed)).unwrap();
        let same = observe(&truth, &pool[0], 1.5, seed);
        let again = observe(&truth, &pool[0], 1.5, seed);
        let other = observe(&truth, &pool[0], 1.5, seed + 1);
        let clean_a = observe(&truth, &pool[0], 0.0, seed);
        let clean_b = observe(&truth, &pool[0], 0.0, seed + 1);
        prop_assert_eq!(same.data(), again.data());
        prop_assert_ne!(other.data(), same.data());
        prop_assert_eq!(clean_a.data(), clean_b.data());
    }
}
