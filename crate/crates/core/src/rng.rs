//! Deterministic, splittable random number generation.
//!
//! Every stochastic operation in the crate takes an explicit `RngState`;
//! there is no global generator. The state is a counter-based ChaCha8 stream
//! addressed by `(seed, stream)`, so parallel work derives independent
//! streams by distinct stream ids and any draw sequence can be reproduced
//! exactly from the `(seed, stream, counter)` triple.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            counter: 0,
            inner,
        }
    }

    /// Fresh state on an independent stream derived from this one's seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of word draws made so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn open01_f64(&mut self) -> f64 {
        loop {
            let u = self.uniform_f64();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn uniform_f32(&mut self) -> f32 {
        self.uniform_f64() as f32
    }

    /// Uniform integer in [0, n).
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection keeps the draw exactly uniform.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal_f64(&mut self) -> f64 {
        let u1 = self.open01_f64();
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_f32(&mut self) -> f32 {
        self.normal_f64() as f32
    }
}

// Interop with `rand`-based distributions (used for Poisson counts).
impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.counter += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        RngState::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.counter += 1;
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Tensor of i.i.d. standard normal draws.
pub fn randn(shape: Vec<usize>, rng: &mut RngState) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.normal_f32()).collect();
    Tensor::new(shape, data).expect("shape/product consistency")
}
