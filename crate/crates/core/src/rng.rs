//! Seeded, portable random source used by the samplers and the corpus split.
//!
//! Stream definition:
//! * generator: ChaCha with 8 rounds, 256-bit key = the 64-bit seed in
//!   little-endian followed by 24 zero bytes, stream 0, counter 0;
//! * `next_u64`: the next two 32-bit output words `lo, hi` combined as
//!   `lo | hi << 32`;
//! * unit float: `(next_u64 >> 11) * 2^-53`, uniform on [0, 1);
//! * bounded integer in [0, n): `next_u64 % n`.
//!
//! Everything downstream of the seed is therefore reproducible on any
//! platform or language that implements ChaCha8.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::num::Scalar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// [`next_unit`](Self::next_unit) converted to the requested scalar.
    pub fn next_unit_as<F: Scalar>(&mut self) -> F {
        let u = F::lit(self.next_unit());
        // f32 rounding can land on 1.0; keep the half-open interval.
        if u >= F::one() {
            F::one() - F::epsilon()
        } else {
            u
        }
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        self.next_u64() % n
    }

    /// Fisher-Yates shuffle: for `i` from `len-1` down to 1, swap `i` with
    /// `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
