//! Seeded parameter initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::tensor::Tensor;

/// Deterministic RNG for a given seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fan-in scaled uniform init: U(-b, b) with b = sqrt(3 / fan_in), which
/// gives the variance-scaling property var = 1/fan_in.
pub fn fan_in_uniform<E: Element>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<E> {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| E::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("shape/data agree by construction")
}

/// Uniform init on a fixed interval.
pub fn uniform<E: Element>(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| E::from_f64(rng.gen_range(lo..hi))).collect();
    Tensor::new(shape, data).expect("shape/data agree by construction")
}
