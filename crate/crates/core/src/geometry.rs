//! Sampling from the heavy-tailed perturbation kernel, uniform angles, and
//! the prior noise distribution, for finite augmentation dimension D and the
//! D→∞ Gaussian limit.
//!
//! For finite D the kernel p_r(x|y) ∝ 1/(||x−y||² + r²)^((N+D)/2) factors
//! into a uniform direction and a radius with density
//! ∝ R^(N−1) (R² + r²)^(−(N+D)/2). Substituting u = R²/(R²+r²) shows
//! u ~ Beta(N/2, D/2), so the radius is sampled exactly as
//! R = r·sqrt(g1/g2) with g1 ~ Gamma(N/2, 1) and g2 ~ Gamma(D/2, 1),
//! which equals r·sqrt(u/(1−u)) without the division hazard near u = 1.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{randn, RngState};
use crate::tensor::Tensor;

/// Augmentation dimension: a finite positive integer or the Gaussian limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Finite(u64),
    Inf,
}

impl Dim {
    pub fn is_finite(&self) -> bool {
        matches!(self, Dim::Finite(_))
    }

    /// The finite value, or a domain error for the Gaussian limit.
    pub fn finite(&self) -> Result<u64> {
        match self {
            Dim::Finite(d) => Ok(*d),
            Dim::Inf => Err(Error::Domain("operation requires finite D".into())),
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Finite(d) => write!(f, "{d}"),
            Dim::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Dim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(Dim::Inf),
            other => {
                let d: u64 = other
                    .parse()
                    .map_err(|_| Error::Domain(format!("invalid D value {other:?}")))?;
                if d == 0 {
                    return Err(Error::Domain("D must be at least 1".into()));
                }
                Ok(Dim::Finite(d))
            }
        }
    }
}

/// A data point paired with its augmented-norm coordinate r ≥ 0.
///
/// r = 0 identifies the data hyperplane.
#[derive(Debug, Clone)]
pub struct AugmentedState {
    pub x: Tensor,
    pub r: f64,
}

impl AugmentedState {
    pub fn new(x: Tensor, r: f64) -> Result<Self> {
        if r < 0.0 {
            return Err(Error::Domain(format!("augmented norm r = {r} < 0")));
        }
        Ok(Self { x, r })
    }
}

/// Gamma(shape, 1) draw via Marsaglia-Tsang squeeze rejection, with the
/// u^(1/shape) boost for shape < 1. Deterministic given the rng state.
pub fn sample_gamma(shape: f64, rng: &mut RngState) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u = rng.open01_f64();
        return sample_gamma(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal_f64();
        let v_cbrt = 1.0 + c * x;
        if v_cbrt <= 0.0 {
            continue;
        }
        let v = v_cbrt * v_cbrt * v_cbrt;
        let u = rng.open01_f64();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Beta(a, b) draw as g1/(g1+g2) from two Gamma draws.
pub fn sample_beta(a: f64, b: f64, rng: &mut RngState) -> f64 {
    let g1 = sample_gamma(a, rng);
    let g2 = sample_gamma(b, rng);
    g1 / (g1 + g2)
}

/// Uniform direction on the unit (n−1)-sphere.
pub fn sample_angle(n: usize, rng: &mut RngState) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Domain("angle dimension must be at least 1".into()));
    }
    loop {
        let u = randn(vec![n], rng);
        let norm = u.norm();
        if norm > 0.0 {
            return Ok(u.scale((1.0 / norm) as f32));
        }
        // All-zero draw has probability zero but is guarded anyway.
    }
}

/// Radius draw from the kernel at anchor distance r, data dimension n and
/// finite augmentation dimension d.
pub fn sample_radius(n: usize, d: Dim, r: f64, rng: &mut RngState) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::Domain(format!("kernel radius r = {r} < 0")));
    }
    let d = d.finite()?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let g1 = sample_gamma(n as f64 / 2.0, rng);
    let g2 = sample_gamma(d as f64 / 2.0, rng);
    Ok(r * (g1 / g2).sqrt())
}

/// Perturbs y at noise scale sigma: y + R·v at r = sigma·√D for finite D,
/// or y + sigma·ε in the Gaussian limit.
pub fn sample_perturbation(y: &Tensor, sigma: f64, d: Dim, rng: &mut RngState) -> Result<Tensor> {
    if sigma < 0.0 {
        return Err(Error::Domain(format!("sigma = {sigma} < 0")));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    match d {
        Dim::Inf => {
            let eps = randn(y.shape().to_vec(), rng);
            y.add(&eps.scale(sigma as f32))
        }
        Dim::Finite(df) => {
            let r = sigma * (df as f64).sqrt();
            let radius = sample_radius(y.len(), d, r, rng)?;
            let v = sample_angle(y.len(), rng)?;
            y.add(&v.scale(radius as f32))
        }
    }
}

/// Draw from the prior noise distribution at r_max = sigma_max·√D
/// (or N(0, sigma_max² I) in the Gaussian limit).
pub fn sample_prior(n: usize, d: Dim, sigma_max: f64, rng: &mut RngState) -> Result<Tensor> {
    if sigma_max <= 0.0 {
        return Err(Error::Domain(format!("sigma_max = {sigma_max} must be > 0")));
    }
    let zero = Tensor::zeros(vec![n]);
    sample_perturbation(&zero, sigma_max, d, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dim_parsing() {
        assert_eq!("64".parse::<Dim>().unwrap(), Dim::Finite(64));
        assert_eq!("inf".parse::<Dim>().unwrap(), Dim::Inf);
        assert!("0".parse::<Dim>().is_err());
        assert!("x".parse::<Dim>().is_err());
    }

    #[test]
    fn angle_is_unit_norm() {
        let mut rng = RngState::new(11);
        for n in [1usize, 2, 7, 64] {
            let v = sample_angle(n, &mut rng).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn angle_1d_is_sign() {
        let mut rng = RngState::new(12);
        let mut signs = [0usize; 2];
        for _ in 0..200 {
            let v = sample_angle(1, &mut rng).unwrap();
            let x = v.data()[0];
            assert!((x.abs() - 1.0).abs() < 1e-6);
            signs[usize::from(x > 0.0)] += 1;
        }
        assert!(signs[0] > 50 && signs[1] > 50);
    }

    #[test]
    fn radius_degenerate_at_zero() {
        let mut rng = RngState::new(13);
        assert_eq!(sample_radius(2, Dim::Finite(2), 0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_radius(2, Dim::Finite(2), -1.0, &mut rng).is_err());
        assert!(sample_radius(2, Dim::Inf, 1.0, &mut rng).is_err());
    }

    #[test]
    fn radius_median_n2_d2() {
        // u ~ Beta(1,1) is uniform with median 1/2, so median(R) = r.
        let mut rng = RngState::new(14);
        let mut rs: Vec<f64> = (0..40_001)
            .map(|_| sample_radius(2, Dim::Finite(2), 1.0, &mut rng).unwrap())
            .collect();
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = rs[rs.len() / 2];
        assert!((median - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn radius_second_moment_matches_beta_identity() {
        // E[R²] = r²·N/(D−2); with N=2, D=128, r=√128 this is ≈ 2.0317.
        let mut rng = RngState::new(15);
        let r = 128f64.sqrt();
        let n = 100_000;
        let mean_sq: f64 = (0..n)
            .map(|_| {
                let v = sample_radius(2, Dim::Finite(128), r, &mut rng).unwrap();
                v * v
            })
            .sum::<f64>()
            / n as f64;
        let expected = 128.0 * 2.0 / 126.0;
        assert!(
            (mean_sq - expected).abs() / expected < 0.02,
            "E[R²] = {mean_sq}, expected {expected}"
        );
    }

    #[test]
    fn perturbation_zero_sigma_is_identity() {
        let mut rng = RngState::new(16);
        let y = Tensor::from_slice(&[1.0, -2.0, 3.0]);
        let out = sample_perturbation(&y, 0.0, Dim::Finite(64), &mut rng).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn prior_gaussian_std() {
        let mut rng = RngState::new(17);
        let n = 100_000;
        let mut acc = 0.0f64;
        for _ in 0..n / 2 {
            let x = sample_prior(2, Dim::Inf, 80.0, &mut rng).unwrap();
            acc += x.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
        }
        let std = (acc / n as f64).sqrt();
        assert!((std - 80.0).abs() / 80.0 < 0.02, "std {std}");
    }

    #[test]
    fn prior_finite_second_moment() {
        // E[||x||²] = r_max²·N/(D−2) with r_max = sigma_max·√D.
        let mut rng = RngState::new(18);
        let (n_dim, d, sigma_max) = (4usize, 64u64, 2.0f64);
        let draws = 100_000;
        let mean_sq: f64 = (0..draws)
            .map(|_| {
                let x = sample_prior(n_dim, Dim::Finite(d), sigma_max, &mut rng).unwrap();
                x.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()
            })
            .sum::<f64>()
            / draws as f64;
        let expected = sigma_max * sigma_max * d as f64 * n_dim as f64 / (d as f64 - 2.0);
        assert!(
            (mean_sq - expected).abs() / expected < 0.03,
            "E[||x||²] = {mean_sq}, expected {expected}"
        );
    }

    #[test]
    fn same_seed_same_draw() {
        let mut a = RngState::new(19);
        let mut b = RngState::new(19);
        let xa = sample_prior(8, Dim::Finite(16), 80.0, &mut a).unwrap();
        let xb = sample_prior(8, Dim::Finite(16), 80.0, &mut b).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn isotropy_of_normalized_perturbations() {
        // Covariance of directions should be I/N with small off-diagonals.
        let n_dim = 4usize;
        let mut rng = RngState::new(20);
        let draws = 100_000;
        let mut cov = vec![0.0f64; n_dim * n_dim];
        for _ in 0..draws {
            let v = sample_angle(n_dim, &mut rng).unwrap();
            for i in 0..n_dim {
                for j in 0..n_dim {
                    cov[i * n_dim + j] += v.data()[i] as f64 * v.data()[j] as f64;
                }
            }
        }
        for i in 0..n_dim {
            for j in 0..n_dim {
                let c = cov[i * n_dim + j] / draws as f64;
                if i == j {
                    assert!((c - 1.0 / n_dim as f64).abs() < 0.01);
                } else {
                    assert!(c.abs() < 0.01, "off-diagonal {c}");
                }
            }
        }
    }
}
