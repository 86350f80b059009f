#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rankfuse_core::rng::{self, Rng};
use rankfuse_core::synth::MultimodalSequence;
use rankfuse_core::tensor::{reconstruct, CpFactors};
use rankfuse_core::{DenseTensor, Matrix};

pub fn gen(seed: u64) -> Rng {
    rng::stream(seed)
}

pub fn normal(g: &mut Rng) -> f64 {
    StandardNormal.sample(g)
}

pub fn gaussian_matrix(rows: usize, cols: usize, g: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(g))
}

pub fn gaussian_vec(n: usize, g: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| normal(g)).collect()
}

pub fn gaussian_tensor(shape: &[usize], g: &mut Rng) -> DenseTensor {
    DenseTensor::from_fn(shape.to_vec(), |_| normal(g)).unwrap()
}

/// Random CP factors with unit weights.
pub fn random_factors(shape: &[usize], rank: usize, g: &mut Rng) -> CpFactors {
    CpFactors::from_factors(shape.iter().map(|&d| gaussian_matrix(d, rank, g)).collect()).unwrap()
}

pub fn low_rank_tensor(shape: &[usize], rank: usize, seed: u64) -> DenseTensor {
    reconstruct(&random_factors(shape, rank, &mut gen(seed)))
}

pub fn uniform(g: &mut Rng, lo: f64, hi: f64) -> f64 {
    g.random_range(lo..hi)
}

/// A random sequence with features in `[-1, 1]` and a random-sign label.
pub fn random_sequence(steps: usize, dims: [usize; 3], g: &mut Rng) -> MultimodalSequence {
    let features = dims.map(|d| Matrix::from_fn(steps, d, |_, _| g.random_range(-1.0..1.0)));
    let label = if g.random_bool(0.5) { 1.5 } else { -1.5 };
    MultimodalSequence::new(features, label).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
