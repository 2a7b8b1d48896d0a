use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::real::Real;

/// Seedable, splittable random stream.
///
/// Every source of randomness in the library (weight init, noise draws,
/// dropout masks, shuffles) is fed one of these; no component owns hidden
/// RNG state. `child` derives an independent stream from a label without
/// consuming entropy from the parent, so freezing or reordering draws in
/// one purpose-specific substream never perturbs another. All draws happen
/// in `f64` and are converted to the target scalar, so the stream is
/// identical for `f32` and `f64` runs with the same seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    rng: ChaCha8Rng,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn seed_from(seed: u64) -> Self {
        let key = splitmix64(seed);
        RngStream {
            key,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derive an independent child stream. Pure in `(self.key, label)`;
    /// the parent's own draw position is untouched.
    pub fn child(&self, label: u64) -> Self {
        let key = splitmix64(self.key ^ splitmix64(label.wrapping_add(0x243f_6a88_85a3_08d3)));
        RngStream {
            key,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn normal_f64(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random_range(0.0..1.0) < p
    }

    pub fn fill_normal<F: Real>(&mut self, out: &mut [F]) {
        for v in out {
            *v = F::from_f64(self.normal_f64());
        }
    }

    pub fn fill_uniform<F: Real>(&mut self, lo: f64, hi: f64, out: &mut [F]) {
        for v in out {
            *v = F::from_f64(self.uniform_f64(lo, hi));
        }
    }

    /// Fisher–Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.rng.random_range(0..=i);
            xs.swap(i, j);
        }
    }
}

/// Labels for the purpose-specific substreams used by training runs.
/// Keeping them in one place guarantees that two runs with the same seed
/// agree on every draw even when one run skips a substream entirely.
pub mod labels {
    pub const INIT: u64 = 1;
    pub const EPOCH: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const INPUT_NOISE: u64 = 4;
    pub const WEIGHT_NOISE: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const EVAL: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::seed_from(7);
        let mut b = RngStream::seed_from(7);
        for _ in 0..100 {
            assert_eq!(a.normal_f64().to_bits(), b.normal_f64().to_bits());
        }
    }

    #[test]
    fn child_is_pure_and_independent() {
        let root = RngStream::seed_from(42);
        let mut c1 = root.child(5);
        let mut c2 = root.child(5);
        let mut other = root.child(6);
        assert_eq!(c1.normal_f64().to_bits(), c2.normal_f64().to_bits());
        assert_ne!(c1.key(), other.key());
        // Drawing from a child must not disturb a sibling derived later.
        let mut c3 = root.child(5);
        let _ = other.normal_f64();
        assert_eq!(c3.normal_f64().to_bits(), c2.normal_f64().to_bits());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = RngStream::seed_from(3);
        let mut xs: Vec<usize> = (0..57).collect();
        s.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn f32_and_f64_share_the_underlying_stream() {
        let mut a = RngStream::seed_from(9);
        let mut b = RngStream::seed_from(9);
        let mut xs = [0.0_f32; 8];
        let mut ys = [0.0_f64; 8];
        a.fill_normal(&mut xs);
        b.fill_normal(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(*x, *y as f32);
        }
    }
}
