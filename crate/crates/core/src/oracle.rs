//! Closed-form denoisers from the exact empirical electric field over a
//! finite dataset. These are the analytic minimizers of the training
//! objective and serve as ground truth for sampler verification: no learned
//! network is involved.
//!
//! All charge weights are computed in the log domain; the exponent (N+D)/2
//! easily exceeds 100 and would overflow otherwise.

use crate::error::{Error, Result};
use crate::geometry::Dim;
use crate::tensor::Tensor;

/// Finite dataset treated as unit charges, optionally paired with
/// per-charge condition vectors.
#[derive(Debug, Clone)]
pub struct ChargeSet {
    points: Vec<Tensor>,
    conditions: Option<Vec<Tensor>>,
}

impl ChargeSet {
    pub fn new(points: Vec<Tensor>) -> Result<Self> {
        Self::check_points(&points)?;
        Ok(Self {
            points,
            conditions: None,
        })
    }

    pub fn with_conditions(points: Vec<Tensor>, conditions: Vec<Tensor>) -> Result<Self> {
        Self::check_points(&points)?;
        if conditions.len() != points.len() {
            return Err(Error::Dimension(format!(
                "{} charges but {} conditions",
                points.len(),
                conditions.len()
            )));
        }
        if let Some(first) = conditions.first() {
            if conditions.iter().any(|c| c.shape() != first.shape()) {
                return Err(Error::Dimension("conditions must share one shape".into()));
            }
        }
        Ok(Self {
            points,
            conditions: Some(conditions),
        })
    }

    fn check_points(points: &[Tensor]) -> Result<()> {
        let first = points
            .first()
            .ok_or_else(|| Error::Domain("charge set must be nonempty".into()))?;
        if points.iter().any(|p| p.shape() != first.shape()) {
            return Err(Error::Dimension("charges must share one shape".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> &[Tensor] {
        &self.points
    }

    pub fn conditions(&self) -> Option<&[Tensor]> {
        self.conditions.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Normalized charge weights from per-charge log weights, shifted by the
/// maximum so at least one weight is exactly 1 before normalization.
fn softmax_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(
            "all charge weights vanished even in the log domain".into(),
        ));
    }
    let w: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Numeric("charge weight normalization failed".into()));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Weighted charge barycenter and, when requested, the field numerator
/// Σ w_j (x − y_j) accumulated in f64.
fn weighted_direction(x: &Tensor, charges: &ChargeSet, weights: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0f64; x.len()];
    for (y, &w) in charges.points().iter().zip(weights) {
        for (a, (&xi, &yi)) in acc.iter_mut().zip(x.data().iter().zip(y.data())) {
            *a += w * (xi as f64 - yi as f64);
        }
    }
    acc
}

/// The ratio form of the empirical field: √D · Σ w_j (x − y_j) / (r Σ w_j)
/// with w_j = (||x − y_j||² + r²)^(−(N+D)/2). The unit-sphere surface area
/// prefactor cancels in the ratio.
pub fn empirical_field(x: &Tensor, r: f64, charges: &ChargeSet, d: Dim) -> Result<Tensor> {
    let d = d.finite()?;
    if r <= 0.0 {
        return Err(Error::Domain(format!("field radius r = {r} must be > 0")));
    }
    let n = x.len();
    let exponent = -((n as f64 + d as f64) / 2.0);
    let log_w: Vec<f64> = charges
        .points()
        .iter()
        .map(|y| {
            let dist_sq = x.distance_sq(y).expect("charge shape checked at construction");
            exponent * (dist_sq + r * r).ln()
        })
        .collect();
    let weights = softmax_weights(&log_w)?;
    let dir = weighted_direction(x, charges, &weights);
    let scale = (d as f64).sqrt() / r;
    let data = dir.iter().map(|&v| (v * scale) as f32).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Finite-D denoiser: x − t·f*(x, r = t·√D). Exact for the empirical
/// measure; inverts the predictor step d = (x − D(x,t))/t.
pub fn oracle_denoiser_pfgm(x: &Tensor, t: f64, charges: &ChargeSet, d: Dim) -> Result<Tensor> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("time t = {t} must be > 0")));
    }
    let df = d.finite()?;
    let r = t * (df as f64).sqrt();
    let field = empirical_field(x, r, charges, d)?;
    x.sub(&field.scale(t as f32))
}

/// Gaussian-posterior mean Σ_j softmax(−||x−y_j||²/(2σ²))·y_j, the D→∞
/// limit denoiser.
pub fn oracle_denoiser_gauss(x: &Tensor, sigma: f64, charges: &ChargeSet) -> Result<Tensor> {
    if sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma = {sigma} must be > 0")));
    }
    let log_w: Vec<f64> = charges
        .points()
        .iter()
        .map(|y| {
            let dist_sq = x.distance_sq(y).expect("charge shape checked at construction");
            -dist_sq / (2.0 * sigma * sigma)
        })
        .collect();
    let weights = softmax_weights(&log_w)?;
    barycenter(x.shape(), charges, &weights)
}

fn barycenter(shape: &[usize], charges: &ChargeSet, weights: &[f64]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let mut acc = vec![0.0f64; n];
    for (y, &w) in charges.points().iter().zip(weights) {
        for (a, &yi) in acc.iter_mut().zip(y.data()) {
            *a += w * yi as f64;
        }
    }
    Tensor::new(shape.to_vec(), acc.into_iter().map(|v| v as f32).collect())
}

/// Condition-reweighted denoiser: each charge weight is multiplied by
/// exp(−||c − c_j||²/(2·bandwidth²)). `bandwidth = 0` selects exact-match
/// conditions only (the discrete special case). Dispatches on D like the
/// unconditional denoisers.
pub fn conditional_oracle(
    x: &Tensor,
    t: f64,
    charges: &ChargeSet,
    c: &Tensor,
    d: Dim,
    bandwidth: f64,
) -> Result<Tensor> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("time t = {t} must be > 0")));
    }
    if bandwidth < 0.0 {
        return Err(Error::Domain(format!("bandwidth {bandwidth} < 0")));
    }
    let conditions = charges
        .conditions()
        .ok_or_else(|| Error::Domain("charge set carries no conditions".into()))?;

    let cond_log_w: Vec<f64> = if bandwidth == 0.0 {
        conditions
            .iter()
            .map(|cj| {
                if cj.data() == c.data() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    } else {
        conditions
            .iter()
            .map(|cj| {
                let dist_sq = c.distance_sq(cj).expect("condition shapes checked");
                -dist_sq / (2.0 * bandwidth * bandwidth)
            })
            .collect()
    };

    let n = x.len();
    let log_w: Vec<f64> = match d {
        Dim::Finite(df) => {
            let r = t * (df as f64).sqrt();
            let exponent = -((n as f64 + df as f64) / 2.0);
            charges
                .points()
                .iter()
                .zip(&cond_log_w)
                .map(|(y, &clw)| {
                    let dist_sq = x.distance_sq(y).expect("charge shapes checked");
                    exponent * (dist_sq + r * r).ln() + clw
                })
                .collect()
        }
        Dim::Inf => charges
            .points()
            .iter()
            .zip(&cond_log_w)
            .map(|(y, &clw)| {
                let dist_sq = x.distance_sq(y).expect("charge shapes checked");
                -dist_sq / (2.0 * t * t) + clw
            })
            .collect(),
    };
    let weights = softmax_weights(&log_w)?;
    match d {
        Dim::Finite(df) => {
            let r = t * (df as f64).sqrt();
            let dir = weighted_direction(x, charges, &weights);
            let scale = (df as f64).sqrt() / r;
            let field = Tensor::new(
                x.shape().to_vec(),
                dir.iter().map(|&v| (v * scale) as f32).collect(),
            )?;
            x.sub(&field.scale(t as f32))
        }
        Dim::Inf => barycenter(x.shape(), charges, &weights),
    }
}
