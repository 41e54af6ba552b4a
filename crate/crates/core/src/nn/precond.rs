//! Input/output preconditioning that turns the raw network into a
//! well-behaved denoiser across noise scales, plus the weighted training
//! loss and its exact parameter gradient.

use crate::error::{Error, Result};
use crate::nn::network::{NetCache, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct Preconditioner {
    pub sigma_data: f64,
}

impl Default for Preconditioner {
    fn default() -> Self {
        Self { sigma_data: 0.5 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PrecondCoeffs {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_noise: f64,
}

impl Preconditioner {
    pub fn new(sigma_data: f64) -> Result<Self> {
        if sigma_data <= 0.0 {
            return Err(Error::Domain(format!("sigma_data = {sigma_data} must be > 0")));
        }
        Ok(Self { sigma_data })
    }

    pub fn coeffs(&self, sigma: f64) -> PrecondCoeffs {
        let sd2 = self.sigma_data * self.sigma_data;
        let s2 = sigma * sigma;
        PrecondCoeffs {
            c_skip: sd2 / (s2 + sd2),
            c_out: sigma * self.sigma_data / (s2 + sd2).sqrt(),
            c_in: 1.0 / (s2 + sd2).sqrt(),
            c_noise: sigma.ln() / 4.0,
        }
    }

    /// Loss weight λ(σ) = 1/c_out(σ)².
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        let c = self.coeffs(sigma);
        1.0 / (c.c_out * c.c_out)
    }
}

/// The denoiser estimate D(x, σ, c) = c_skip·x + c_out·F(c_in·x, c_noise, c).
pub fn precondition(
    net: &Network,
    x: &Tensor,
    sigma: f64,
    c: &Tensor,
    pc: &Preconditioner,
) -> Result<Tensor> {
    let k = pc.coeffs(sigma);
    let raw = net.forward(&x.scale(k.c_in as f32), k.c_noise as f32, c)?;
    x.scale(k.c_skip as f32).add(&raw.scale(k.c_out as f32))
}

/// One training example: a perturbed target at noise scale sigma, its
/// condition, and the clean target.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub y_hat: Tensor,
    pub sigma: f64,
    pub cond: Tensor,
    pub y: Tensor,
}

/// Weighted denoising loss over a batch and its exact reverse-mode gradient
/// with respect to the flat parameter vector.
///
/// loss = mean over batch items and pixels of λ(σ_i)·(D(ŷ_i, σ_i, c_i) − y_i)².
pub fn loss_and_grad(
    net: &Network,
    batch: &[BatchItem],
    pc: &Preconditioner,
) -> Result<(f64, Vec<f32>)> {
    if batch.is_empty() {
        return Err(Error::Domain("batch must be nonempty".into()));
    }
    let mut grad = vec![0.0f32; net.param_len()];
    let mut loss = 0.0f64;
    let pixels = batch[0].y.len();
    let denom = (batch.len() * pixels) as f64;

    for item in batch {
        let k = pc.coeffs(item.sigma);
        let lambda = 1.0 / (k.c_out * k.c_out);
        let x_in = item.y_hat.scale(k.c_in as f32);
        let (raw, cache): (Tensor, NetCache) =
            net.forward_cached(&x_in, k.c_noise as f32, &item.cond)?;
        // diff = c_skip·ŷ + c_out·F − y
        let d_est = item
            .y_hat
            .scale(k.c_skip as f32)
            .add(&raw.scale(k.c_out as f32))?;
        let diff = d_est.sub(&item.y)?;
        let item_loss: f64 = diff
            .data()
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            * lambda;
        loss += item_loss / denom;

        // dL/dF = 2·λ·c_out·diff / denom; λ·c_out² = 1 keeps this tame.
        let scale = (2.0 * lambda * k.c_out / denom) as f32;
        let grad_out = diff.scale(scale);
        net.backward(&cache, &grad_out, &mut grad)?;
    }

    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        let sigmas: Vec<f64> = batch.iter().map(|b| b.sigma).collect();
        let lo = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::Numeric(format!(
            "non-finite loss/gradient (loss = {loss}, sigma range [{lo}, {hi}])"
        )));
    }
    Ok((loss, grad))
}
