//! SplitMix64 pseudo-random generator.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deterministic SplitMix64 stream. Single owner; clone to fork a copy of the state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for a named consumer of a run seed.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut mixer = Prng::new(seed ^ stream.wrapping_mul(GOLDEN_GAMMA));
        Self::new(mixer.next_u64())
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform `f64` in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires a positive bound");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// One uniform `f32` in `[lo, hi)`.
    pub fn uniform_one(&mut self, lo: f32, hi: f32) -> f32 {
        let u = self.next_f64();
        let v = (f64::from(lo) + u * (f64::from(hi) - f64::from(lo))) as f32;
        if v >= hi {
            next_down(hi)
        } else {
            v
        }
    }

    /// `n` uniform values in `[lo, hi)`; advances the state `n` times.
    pub fn uniform(&mut self, n: usize, lo: f32, hi: f32) -> Result<Vec<f32>> {
        if !(lo < hi) {
            return Err(Error::InvalidRange {
                lo: f64::from(lo),
                hi: f64::from(hi),
            });
        }
        Ok((0..n).map(|_| self.uniform_one(lo, hi)).collect())
    }

    /// Fisher-Yates sample of `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn next_down(x: f32) -> f32 {
    if x == 0.0 {
        -f32::from_bits(1)
    } else if x > 0.0 {
        f32::from_bits(x.to_bits() - 1)
    } else {
        f32::from_bits(x.to_bits() + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_outputs_seed_zero() {
        let mut p = Prng::new(0);
        assert_eq!(p.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(p.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(p.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn uniform_in_range() {
        let mut p = Prng::new(42);
        for (lo, hi) in [(0.0f32, 1.0f32), (-3.0, -2.5), (-1e-3, 1e-3), (10.0, 10.000001)] {
            for v in p.uniform(2000, lo, hi).unwrap() {
                assert!(v >= lo && v < hi, "{v} outside [{lo}, {hi})");
            }
        }
    }

    #[test]
    fn empty_range_rejected() {
        let mut p = Prng::new(1);
        assert!(matches!(
            p.uniform(3, 1.0, 1.0),
            Err(Error::InvalidRange { .. })
        ));
        assert!(p.uniform(3, 2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_advances_state_once_per_value() {
        let mut a = Prng::new(9);
        let mut b = Prng::new(9);
        a.uniform(5, 0.0, 1.0).unwrap();
        for _ in 0..5 {
            b.next_u64();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Prng::new(1234);
        let mut b = Prng::new(1234);
        let xs = a.uniform(10_000, -1.0, 1.0).unwrap();
        let ys = b.uniform(10_000, -1.0, 1.0).unwrap();
        assert!(xs.iter().zip(&ys).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn sample_indices_distinct() {
        let mut p = Prng::new(5);
        let mut idx = p.sample_indices(100, 64);
        assert_eq!(idx.len(), 64);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 64);
        assert_eq!(p.sample_indices(10, 64).len(), 10);
    }
}
