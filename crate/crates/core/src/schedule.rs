//! Noise-level discretization, the training distribution of noise scales,
//! and the r = σ·√D translation between the radial coordinate and time.

use crate::error::{Error, Result};
use crate::geometry::Dim;
use crate::rng::RngState;

/// Discretized noise levels t_0 > t_1 > ... > t_{T-1} > t_T = 0 with
/// t_0 = sigma_max and t_{T-1} = sigma_min.
#[derive(Debug, Clone)]
pub struct Schedule {
    t: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl Schedule {
    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
}

/// Karras-style power interpolation between sigma_max and sigma_min over T
/// levels, with an appended zero.
pub fn make_schedule(t_steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Schedule> {
    if t_steps < 2 {
        return Err(Error::Domain(format!("T = {t_steps} must be at least 2")));
    }
    if !(sigma_min > 0.0 && sigma_max > sigma_min) {
        return Err(Error::Domain(format!(
            "need 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
        )));
    }
    if rho <= 0.0 {
        return Err(Error::Domain(format!("rho = {rho} must be > 0")));
    }
    let inv = 1.0 / rho;
    let hi = sigma_max.powf(inv);
    let lo = sigma_min.powf(inv);
    let mut t = Vec::with_capacity(t_steps + 1);
    for i in 0..t_steps {
        let frac = i as f64 / (t_steps - 1) as f64;
        t.push((hi + frac * (lo - hi)).powf(rho));
    }
    // Pin the endpoints exactly; powf round-trips can be off in the last ulp.
    t[0] = sigma_max;
    t[t_steps - 1] = sigma_min;
    t.push(0.0);
    Ok(Schedule {
        t,
        sigma_min,
        sigma_max,
        rho,
    })
}

/// Log-normal training distribution of noise scales.
#[derive(Debug, Clone, Copy)]
pub struct SigmaPrior {
    pub p_mean: f64,
    pub p_std: f64,
}

impl SigmaPrior {
    pub fn new(p_mean: f64, p_std: f64) -> Result<Self> {
        if p_std <= 0.0 {
            return Err(Error::Domain(format!("p_std = {p_std} must be > 0")));
        }
        Ok(Self { p_mean, p_std })
    }
}

impl Default for SigmaPrior {
    fn default() -> Self {
        Self {
            p_mean: -1.2,
            p_std: 1.2,
        }
    }
}

pub fn sample_sigma(prior: &SigmaPrior, rng: &mut RngState) -> f64 {
    (prior.p_mean + prior.p_std * rng.normal_f64()).exp()
}

/// The radial coordinate r = sigma·√D; only defined for finite D.
pub fn sigma_to_r(sigma: f64, d: Dim) -> Result<f64> {
    if sigma < 0.0 {
        return Err(Error::Domain(format!("sigma = {sigma} < 0")));
    }
    let d = d.finite()?;
    Ok(sigma * (d as f64).sqrt())
}
