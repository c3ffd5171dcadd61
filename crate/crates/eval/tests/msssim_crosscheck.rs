//! The two MS-SSIM routes (training-side separable tape implementation,
//! metric-side direct 2-D windowing) must agree.

use gmsd_tensor::init::{seeded_rng, uniform};
use gmsd_tensor::{Tape, Tensor};

#[test]
fn tape_and_reference_agree_within_1e4() {
    for (seed, h, w) in [(1u64, 64usize, 64usize), (2, 48, 80), (3, 160, 160), (4, 24, 24)] {
        let mut rng = seeded_rng(seed);
        let a: Tensor<f64> = uniform(&mut rng, vec![1, 3, h, w], 0.0, 1.0);
        let noise: Tensor<f64> = uniform(&mut rng, vec![1, 3, h, w], -0.1, 0.1);
        let b = a.zip(&noise, |x, n| (x + n).clamp(0.0, 1.0)).unwrap();

        let reference = gmsd_eval::ms_ssim(&a, &b).unwrap();
        let tape_value = {
            let t: Tape<f64> = Tape::new();
            let av = t.leaf(a);
            let bv = t.leaf(b);
            t.value(gmsd_train::ms_ssim_t(&t, av, bv)).item()
        };
        assert!(
            (reference - tape_value).abs() < 1e-4,
            "seed {seed} ({h}x{w}): reference {reference} vs tape {tape_value}"
        );
    }
}

#[test]
fn scale_reduction_agrees_between_routes() {
    assert_eq!(gmsd_eval::usable_scales(64, 64), gmsd_train::usable_scales(64, 64));
    assert_eq!(gmsd_eval::usable_scales(256, 256), gmsd_train::usable_scales(256, 256));
    assert_eq!(gmsd_eval::usable_scales(16, 16), gmsd_train::usable_scales(16, 16));
}
