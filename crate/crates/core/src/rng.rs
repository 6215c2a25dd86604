//! Seeded deterministic random number generation.
//!
//! The generator is xoshiro256** (Blackman & Vigna) seeded through
//! SplitMix64, with standard-normal variates produced by the Box-Muller
//! transform. All three pieces are fixed parts of the contract: an
//! identical seed and call sequence yields identical output on every
//! platform, which is what makes heatmaps, benchmarks, and training runs
//! reproducible bit for bit.

use core::f64::consts::PI;

/// Sampling distribution for [`RngState::sample`] and
/// [`crate::Matrix::random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dist {
    StandardNormal,
    /// Uniform on the open interval (-1, 1).
    UniformSymmetric,
}

/// State of the deterministic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        Self {
            s: [next(), next(), next(), next()],
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard-normal variate via Box-Muller. Pairs are generated at
    /// once; the second value is cached in the state so the stream stays
    /// a pure function of seed and call count.
    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps the log finite
        let u2 = self.next_f64();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * PI * u2;
        self.spare_normal = Some(radius * libm::sin(theta));
        radius * libm::cos(theta)
    }

    /// Draws an index in `[0, bound)` by rejection, avoiding modulo bias.
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    pub fn sample(&mut self, dist: Dist) -> f64 {
        match dist {
            Dist::StandardNormal => self.next_standard_normal(),
            Dist::UniformSymmetric => self.next_uniform(-1.0, 1.0),
        }
    }
}
