//! Counter-based random streams.
//!
//! A [`RandomStream`] is a `(seed, stream id)` pair backed by ChaCha8. Draw
//! number `k` of a stream is a pure function of `(seed, stream, k)`: the
//! generator is positioned at word `2k` before reading, so any sample or path
//! can be regenerated in isolation and results do not depend on how work is
//! split across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// A derived stream for sub-task `id` (a path, a kernel, a sample block).
    pub fn child(&self, id: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(splitmix64(self.stream) ^ id),
        }
    }

    fn generator_at(&self, draw: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(draw) * 2);
        rng
    }

    /// Uniforms on the open interval (0, 1) for draws `offset, offset + 1, …`.
    pub fn fill_uniform(&self, offset: u64, out: &mut [f64]) {
        let mut rng = self.generator_at(offset);
        for u in out.iter_mut() {
            *u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        }
    }

    /// Standard normals by inverse CDF of [`fill_uniform`](Self::fill_uniform).
    pub fn fill_normal(&self, offset: u64, out: &mut [f64]) {
        let std = standard_normal();
        self.fill_uniform(offset, out);
        for x in out.iter_mut() {
            *x = std.inverse_cdf(*x);
        }
    }

    /// `len` standard normals forming block `index` of a stream cut into
    /// consecutive blocks of that length.
    pub fn normal_block(&self, index: u64, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        self.fill_normal(index * len as u64, &mut out);
        out
    }
}

pub(crate) fn standard_normal() -> Normal {
    Normal::standard()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_addressable() {
        let s = RandomStream::new(7, 3);
        let mut all = vec![0.0; 10];
        s.fill_normal(0, &mut all);
        let mut tail = vec![0.0; 4];
        s.fill_normal(6, &mut tail);
        assert_eq!(&all[6..], &tail[..]);
        assert_eq!(s.normal_block(2, 3), all[6..9].to_vec());
    }

    #[test]
    fn streams_differ() {
        let a = RandomStream::new(1, 0).normal_block(0, 4);
        let b = RandomStream::new(1, 1).normal_block(0, 4);
        let c = RandomStream::new(2, 0).normal_block(0, 4);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(RandomStream::new(1, 0).child(5), RandomStream::new(1, 0).child(6));
    }

    #[test]
    fn normal_moments_are_plausible() {
        let n = 200_000;
        let mut x = vec![0.0; n];
        RandomStream::new(11, 0).fill_normal(0, &mut x);
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
