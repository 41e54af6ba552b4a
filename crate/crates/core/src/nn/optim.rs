//! Bias-corrected Adam with an exponential moving average of the weights.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub ema_params: Vec<f32>,
    pub ema_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &[f32], lr: f64, ema_decay: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            ema_params: params.to_vec(),
            ema_decay,
        }
    }

    /// One Adam update followed by the EMA update.
    pub fn adam_step(&mut self, params: &mut [f32], grad: &[f32]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer state sized {}, params {}, grad {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i] as f64;
            let m = self.beta1 * self.m[i] as f64 + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.v[i] as f64 + (1.0 - self.beta2) * g * g;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] -= (self.lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
        }
        for (e, &p) in self.ema_params.iter_mut().zip(params.iter()) {
            *e = (self.ema_decay * *e as f64 + (1.0 - self.ema_decay) * p as f64) as f32;
        }
        Ok(())
    }
}
