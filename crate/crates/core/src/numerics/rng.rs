//! Seeded pseudo-random number generation.
//!
//! One fixed algorithm: xoshiro256++ with SplitMix64 state expansion.
//! Identical seed plus identical call sequence yields identical outputs on
//! every platform; integer draws are pure bit operations and the Gaussian
//! draw goes through the rational inverse-CDF, so no libm trigonometry is
//! involved.

use crate::error::{Error, Result};
use crate::numerics::scalar::normal_quantile;

/// The single supported generator algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RngAlgorithm {
    Xoshiro256PlusPlus,
}

/// Deterministic PRNG. Single-owner: parallel code must split seeds
/// explicitly via [`Rng::from_seed_stream`].
#[derive(Debug, Clone)]
pub struct Rng {
    algorithm: RngAlgorithm,
    state: [u64; 4],
    seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for s in &mut state {
            *s = splitmix64(&mut sm);
        }
        if state == [0u64; 4] {
            state[0] = 1;
        }
        Rng {
            algorithm: RngAlgorithm::Xoshiro256PlusPlus,
            state,
            seed,
        }
    }

    /// Independent generator for sub-stream `stream` of `seed`. Used to give
    /// init/batching/dropout their own deterministic streams.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        let mut sm = seed;
        let base = splitmix64(&mut sm);
        Rng::new(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> RngAlgorithm {
        self.algorithm
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform strictly inside (0, 1); safe argument for the inverse CDF.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in [0, n) by rejection.
    pub fn next_range(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_range requires n > 0");
        // Largest x such that [0, x] splits evenly into n buckets.
        let limit = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    /// One standard normal draw via the inverse CDF.
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.next_open01())
    }

    /// `n` i.i.d. N(mean, std^2) draws. `std` must be strictly positive.
    pub fn sample_gaussian(&mut self, mean: f64, std: f64, n: usize) -> Result<Vec<f64>> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian sampling requires finite mean and std > 0, got mean={mean}, std={std}"
            )));
        }
        Ok((0..n)
            .map(|_| mean + std * self.standard_normal())
            .collect())
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        let n = xs.len();
        for i in (1..n).rev() {
            let j = self.next_range(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from [0, n), in ascending order.
    pub fn choose(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::Capacity(format!(
                "cannot choose {k} items from a pool of {n}"
            )));
        }
        // Partial Fisher-Yates over an index vector.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_range((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut picked = idx[..k].to_vec();
        picked.sort_unstable();
        Ok(picked)
    }
}
