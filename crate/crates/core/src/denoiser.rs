//! The denoiser interface shared by the learned network and the
//! closed-form oracles.

use std::cell::Cell;

use crate::error::Result;
use crate::geometry::Dim;
use crate::oracle::{conditional_oracle, oracle_denoiser_gauss, oracle_denoiser_pfgm, ChargeSet};
use crate::tensor::Tensor;

/// Anything that maps a noisy state at noise level t, plus a condition, to a
/// clean estimate. The schedule uses σ(t) = t throughout.
pub trait Denoiser {
    fn evaluate(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor>;
}

/// Finite-D empirical-field denoiser over a fixed charge set.
pub struct PfgmOracle {
    pub charges: ChargeSet,
    pub d: Dim,
}

impl Denoiser for PfgmOracle {
    fn evaluate(&self, x: &Tensor, t: f64, _c: &Tensor) -> Result<Tensor> {
        oracle_denoiser_pfgm(x, t, &self.charges, self.d)
    }
}

/// Gaussian-posterior-mean denoiser (the D→∞ limit).
pub struct GaussOracle {
    pub charges: ChargeSet,
}

impl Denoiser for GaussOracle {
    fn evaluate(&self, x: &Tensor, t: f64, _c: &Tensor) -> Result<Tensor> {
        oracle_denoiser_gauss(x, t, &self.charges)
    }
}

/// Condition-reweighted oracle denoiser.
pub struct ConditionalOracleDenoiser {
    pub charges: ChargeSet,
    pub d: Dim,
    pub bandwidth: f64,
}

impl Denoiser for ConditionalOracleDenoiser {
    fn evaluate(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        conditional_oracle(x, t, &self.charges, c, self.d, self.bandwidth)
    }
}

/// Wraps a denoiser and counts evaluations; used to verify NFE accounting.
pub struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    calls: Cell<u64>,
}

impl<'a> CountingDenoiser<'a> {
    pub fn new(inner: &'a dyn Denoiser) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn evaluate(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        self.calls.set(self.calls.get() + 1);
        self.inner.evaluate(x, t, c)
    }
}

/// Denoiser defined by a closure; handy for synthetic fields in tests.
pub struct FnDenoiser<F>(pub F);

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Tensor, f64, &Tensor) -> Result<Tensor>,
{
    fn evaluate(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        (self.0)(x, t, c)
    }
}
