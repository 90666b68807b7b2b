#![allow(dead_code)]

use hsr_core::{SpectralCube, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[lo, hi)` entries.
pub fn random_cube(seed: u64, w: usize, h: usize, c: usize, lo: f32, hi: f32) -> SpectralCube {
    let mut r = rng(seed);
    SpectralCube::new(w, h, c, (0..w * h * c).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// `x` plus uniform noise of half-width `amp`, clamped to `[0, 1]`.
pub fn perturbed(x: &SpectralCube, seed: u64, amp: f32) -> SpectralCube {
    let mut r = rng(seed);
    let data = x.data().iter().map(|v| (v + r.random_range(-amp..amp)).clamp(0.0, 1.0)).collect();
    SpectralCube::new(x.width(), x.height(), x.channels(), data).unwrap()
}

pub fn random_tensor(seed: u64, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::uniform(shape, lo, hi, &mut rng(seed))
}
