//! Seeded parameter initialization.
//!
//! Every parameter draws from its own stream derived from `(seed, name)`, so
//! a backbone tensor gets identical values in every architecture variant
//! that contains it, regardless of what else the variant registers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Parameter, Scalar};

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent RNG stream for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ fnv1a(label.as_bytes())))
}

/// Kaiming-uniform (fan-in, ReLU gain): U(-√(6/fan_in), √(6/fan_in)).
pub fn kaiming_uniform<T: Scalar>(
    seed: u64,
    name: &str,
    shape: &[usize],
    fan_in: usize,
) -> Result<Parameter<T>> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let mut rng = stream(seed, name);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Parameter::new(name, shape, data)
}

pub fn constant<T: Scalar>(name: &str, shape: &[usize], value: f64) -> Result<Parameter<T>> {
    let n = shape.iter().product();
    Parameter::new(name, shape, vec![T::of(value); n])
}
