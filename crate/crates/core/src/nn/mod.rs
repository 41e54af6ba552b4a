//! A minimal from-scratch neural denoiser: reverse-mode gradients through a
//! small convolution stack, EDM-style preconditioning, Adam, and EMA.

pub mod checkpoint;
pub mod kernels;
pub mod network;
pub mod optim;
pub mod precond;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use network::{Layer, Network, NetworkSpec, Stack};
pub use optim::OptimizerState;
pub use precond::{loss_and_grad, precondition, BatchItem, PrecondCoeffs, Preconditioner};

use crate::denoiser::Denoiser;
use crate::error::Result;
use crate::tensor::Tensor;

/// The learned realization of the denoiser interface, with σ(t) = t.
pub struct NetDenoiser {
    pub net: Network,
    pub pc: Preconditioner,
}

impl Denoiser for NetDenoiser {
    fn evaluate(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        precondition(&self.net, x, t, c, &self.pc)
    }
}
