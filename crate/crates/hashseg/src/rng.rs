//! Seeded, portable random draws.
//!
//! Every randomized artifact in this crate (hash functions, synthetic
//! scenes) is derived from one pinned generator so that identical seeds
//! give bit-identical results on every platform:
//!
//! * the 64-bit seed is expanded to a 32-byte key with four SplitMix64
//!   steps, serialized little-endian;
//! * the key drives a ChaCha8 stream (via `rand_chacha`);
//! * integer draws use rejection sampling on `next_u32`, and unit-interval
//!   draws take the top 53 bits of `next_u64`.
//!
//! The expansion and the draw procedures live here, in repo code, so the
//! stream does not depend on distribution internals of any dependency.
//! `tests::pinned_stream` freezes reference values.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SeededRng {
    inner: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SeededRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `0..n`, unbiased via rejection sampling.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0 && n <= u32::MAX as usize);
        let n = n as u32;
        let zone = u32::MAX - (u32::MAX % n);
        loop {
            let v = self.next_u32();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Uniform draw from `[0, 1)` with 53-bit resolution.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi]`; returns `lo` when the interval is empty.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        if lo == hi {
            return lo;
        }
        lo + self.uniform_f64() * (hi - lo)
    }

    /// Uniform draw from the inclusive integer range `lo..=hi`.
    pub fn uniform_u32(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        lo + self.uniform_index((hi - lo + 1) as usize) as u32
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_index(i + 1);
            items.swap(i, j);
        }
    }
}
