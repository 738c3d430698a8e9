use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// `sqrt(6 / (fan_in + fan_out))`. For a matrix of shape `(rows, cols)`,
/// `fan_in = cols` and `fan_out = rows`; a vector of length `n` uses
/// `n` for both.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        [r, c] => (*c, *r),
        _ => panic!("glorot init needs rank 1 or 2, got {shape:?}"),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform draws in `[-bound, bound]` with the Glorot bound.
pub fn glorot_init(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let bound = glorot_bound(shape);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot draws are finite")
}

pub fn glorot_init_seeded(shape: &[usize], seed: u64) -> Tensor {
    glorot_init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}
