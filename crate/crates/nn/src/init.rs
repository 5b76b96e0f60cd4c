use rand::Rng;

use crate::error::{NnError, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Bound of the Glorot (Xavier) uniform distribution.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Samples a tensor uniformly from `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform_init(
    fan_in: usize,
    fan_out: usize,
    shape: Vec<usize>,
    seed: u64,
) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(NnError::InvalidArgument(format!(
            "glorot init needs positive fans, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    let bound = glorot_bound(fan_in, fan_out);
    let n: usize = shape.iter().product();
    let mut rng = seeded(seed);
    let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, values)
}
