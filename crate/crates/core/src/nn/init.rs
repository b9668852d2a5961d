use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::real::{lit, Real};
use crate::nn::tensor::Tensor;

/// He-normal samples with standard deviation `sqrt(2 / fan_in)`.
pub fn he_init<T: Real>(shape: &[usize], fan_in: usize, seed: u64) -> Tensor<T> {
    he_init_with(shape, fan_in, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn he_init_with<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| lit(normal.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}
