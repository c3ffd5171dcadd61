//! Quantization, the training-time noise proxy, and rate accounting.

use gmsd_tensor::{Element, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::pmf::{ALPHABET_MAX, ALPHABET_MIN};

/// Round-based quantization, half away from zero. The tie rule is
/// normative: encoder and decoder builds must agree.
pub fn quantize_round<E: Element>(y: &Tensor<E>) -> Tensor<E> {
    y.map(|v| v.round())
}

/// Round and clamp into the coding alphabet; returns symbols plus the
/// number of elements the clamp touched.
pub fn quantize_symbols<E: Element>(y: &Tensor<E>) -> (Vec<i32>, usize) {
    let mut clamped = 0usize;
    let symbols = y
        .data()
        .iter()
        .map(|&v| {
            let r = v.round().as_f64();
            let s = r as i32;
            if r < ALPHABET_MIN as f64 {
                clamped += 1;
                ALPHABET_MIN
            } else if r > ALPHABET_MAX as f64 {
                clamped += 1;
                ALPHABET_MAX
            } else {
                s
            }
        })
        .collect();
    (symbols, clamped)
}

/// The training-stage quantization proxy: add i.i.d. U(-1/2, 1/2) noise.
pub fn add_uniform_noise<E: Element>(y: &Tensor<E>, rng: &mut ChaCha8Rng) -> Tensor<E> {
    let mut out = y.clone();
    for v in out.data_mut() {
        *v += E::from_f64(rng.gen_range(-0.5..0.5));
    }
    out
}

/// Total rate in bits of a floored pmf tensor: sum of -log2 p.
pub fn rate_bits<E: Element>(pmf: &Tensor<E>) -> f64 {
    pmf.data().iter().map(|&p| -p.as_f64().log2()).sum()
}
