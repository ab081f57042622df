//! Quasi-random point sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton sequence in `[0,1)^dim`, optionally shifted modulo 1 by a seeded
/// random offset (Cranley-Patterson rotation).
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    index: u64,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
        Self { dim, index: 1, shift: vec![0.0; dim] }
    }

    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Self::new(dim);
        h.shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        h
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|d| {
                let v = radical_inverse(i, PRIMES[d] as u64) + self.shift[d];
                v - v.floor()
            })
            .collect()
    }
}
