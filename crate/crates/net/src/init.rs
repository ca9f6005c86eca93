//! Seeded weight initialisers.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// He-normal with fan-out scaling, used for convolutions.
pub fn kaiming_normal_fan_out(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f32> {
    let fan_out = shape[0] * shape[2..].iter().product::<usize>();
    let std = (2.0 / fan_out as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng) as f32)
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f32> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.sample(dist) as f32)
}
