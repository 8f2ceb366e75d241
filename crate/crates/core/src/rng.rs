//! Seeded randomness.
//!
//! Every random draw in the crate comes from SplitMix64 (reference
//! `splitmix64.c`, state initialised to the seed verbatim). The derived
//! conversions are fixed so other implementations can reproduce splits and
//! landscapes exactly:
//!
//! * unit float: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`
//! * bounded integer in `[0, n)`: rejection sampling, discard draws below
//!   `(2^64 - n) mod n`, then take `x mod n`
//! * k-subset: partial Fisher-Yates, for `i in 0..k` swap `i` with
//!   `i + bounded(len - i)`

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    pub fn bounded(&mut self, n: u64) -> u64 {
        assert!(n > 0, "bounded() needs a non-empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// Moves a uniform random `k`-subset of `items` into its first `k` slots.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], k: usize) {
        let len = items.len();
        for i in 0..k.min(len) {
            let j = i + self.bounded((len - i) as u64) as usize;
            items.swap(i, j);
        }
    }
}

/// SplitMix64 output finalizer, used as a stateless hash.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64() {
        // first outputs of splitmix64.c seeded with 0
        let mut rng = SeededRng::new(0);
        assert_eq!(rng.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(rng.next_u64(), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn mix64_agrees_with_generator() {
        let mut rng = SeededRng::new(42);
        assert_eq!(rng.next_u64(), mix64(42));
    }

    #[test]
    fn unit_range() {
        let mut rng = SeededRng::new(7);
        for _ in 0..10_000 {
            let u = rng.unit_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn bounded_covers_range() {
        let mut rng = SeededRng::new(3);
        let mut seen = [false; 6];
        for _ in 0..1000 {
            seen[rng.bounded(6) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
