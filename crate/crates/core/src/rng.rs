//! Seeded random draws with fully specified algorithms.
//!
//! Every stream is a ChaCha8 keystream whose 32-byte key is the 64-bit seed in
//! little-endian order followed by 24 zero bytes (nonce and counter start at
//! zero). The derived draws are defined here rather than delegated so another
//! implementation can reproduce them word for word:
//!
//! * uniform `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * standard normal: Box-Muller, cosine branch only, one draw consumes two
//!   uniforms `u1, u2`: `sqrt(-2 ln(1 - u1)) * cos(2π u2)`
//! * Poisson(λ): λ is split into `ceil(λ / 30)` equal chunks; each chunk uses
//!   Knuth's product-of-uniforms method and the chunk counts are summed.
//! * integer in `[0, n)`: `floor(uniform * n)`

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

const POISSON_CHUNK: f64 = 30.0;

impl SimRng {
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

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if !(lambda > 0.0) {
            return 0;
        }
        let chunks = (lambda / POISSON_CHUNK).ceil().max(1.0);
        let per = lambda / chunks;
        let limit = (-per).exp();
        let mut total = 0;
        for _ in 0..chunks as u64 {
            let mut p = 1.0;
            loop {
                p *= self.uniform();
                if p <= limit {
                    break;
                }
                total += 1;
            }
        }
        total
    }
}
