//! Fixtures shared by the benchmarks.

use std::f64::consts::TAU;

use contourrend::data::{gen_sample, Category, Sample};
use contourrend::numerics::Tensor;
use contourrend::Contour;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simple clockwise star polygon with `k` vertices.
pub fn star(seed: u64, k: usize) -> Contour {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let t = TAU * (i as f64 + rng.random_range(0.1..0.9)) / k as f64;
            let r = rng.random_range(0.1..0.35);
            [0.5 + r * t.cos(), 0.5 + r * t.sin()]
        })
        .collect();
    Contour::from_xy(&pts).expect("star has at least 3 vertices")
}

pub fn random_tensor(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches length")
}

/// One sample per category at image size `size`.
pub fn samples(seed: u64, size: usize) -> Vec<Sample> {
    Category::ALL
        .iter()
        .enumerate()
        .map(|(i, &c)| gen_sample(seed + i as u64, c, size).expect("valid size"))
        .collect()
}
