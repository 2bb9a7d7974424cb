//! Shared helpers for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub fn rand_tensor(dims: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Central differences of `f` with respect to every element of `at`.
pub fn central_diff(at: &Tensor<f64>, h: f64, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut p = at.clone();
            p.data_mut()[i] += h;
            let mut m = at.clone();
            m.data_mut()[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a-b| / max(|a|, |b|, 1e-3)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
