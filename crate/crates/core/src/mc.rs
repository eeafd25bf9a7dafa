//! Monte Carlo estimation over the Gaussian coordinates.
//!
//! Sample `i` is block `i` of the stream, so the set of samples is fixed by
//! `(seed, stream, N)`. Values are produced in parallel but collected in
//! index order and reduced sequentially with compensated summation, which
//! makes every estimate independent of the worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos_eval::GaussianPoint;
use crate::error::{ChaosError, Result};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(samples)`.
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = neumaier_sum(values.iter().copied()) / n as f64;
        let var = if n > 1 {
            neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// `|mean - target| <= k · stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Kahan–Babuška–Neumaier summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Evaluates `f` on samples `0..n` of the stream, in index order.
pub fn mc_map<T, F>(dim: usize, n: usize, stream: RandomStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&GaussianPoint) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(&GaussianPoint::sample(dim, stream, i as u64)))
        .collect()
}

/// Monte Carlo mean of a scalar functional of `ξ ∈ R^dim`.
pub fn mc_mean<F>(dim: usize, n: usize, stream: RandomStream, f: F) -> Result<McEstimate>
where
    F: Fn(&GaussianPoint) -> f64 + Sync,
{
    if n < 2 {
        return Err(ChaosError::InvalidArgument(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    Ok(McEstimate::from_values(&mc_map(dim, n, stream, f)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_functional() {
        let est = mc_mean(3, 100, RandomStream::new(1, 0), |_| 1.0).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.samples, 100);
    }

    #[test]
    fn second_moment_of_coordinate() {
        let est = mc_mean(2, 100_000, RandomStream::new(2, 0), |x| x[0] * x[0]).unwrap();
        assert!(est.within(1.0, 4.0), "{est:?}");
    }

    #[test]
    fn rejects_tiny_sample() {
        assert!(mc_mean(1, 1, RandomStream::new(0, 0), |x| x[0]).is_err());
    }

    #[test]
    fn worker_count_does_not_matter() {
        let f = |x: &GaussianPoint| x[0].powi(3) - x[1];
        let a = mc_mean(2, 5000, RandomStream::new(9, 4), f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_mean(2, 5000, RandomStream::new(9, 4), f).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(neumaier_sum(v), 1.0);
    }
}
