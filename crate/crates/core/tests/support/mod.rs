//! Shared fixtures and oracles for the acceptance suite.

#![allow(dead_code)]

use std::sync::OnceLock;
use std::time::Instant;

use pflow_core::data::{make_point_task, PairedDataset, PointTask};
use pflow_core::geometry::Dim;
use pflow_core::nn::{Checkpoint, Layer, NetworkSpec, Stack};
use pflow_core::rng::RngState;
use pflow_core::schedule::SigmaPrior;
use pflow_core::train::{train_loop, TrainConfig};

/// Noise level used to query the trained scalar model: well inside the
/// trained sigma range so the conditional branch does the work.
pub const SCALAR_EVAL_SIGMA: f64 = 0.25;

/// Stacks covering every layer type, with parameter scales that keep the
/// gradients well above the finite-difference noise floor.
fn gradcheck_cases() -> Vec<(Stack, (usize, usize, usize), u64)> {
    vec![
        (
            Stack::new(vec![
                Layer::Conv3x3 { in_ch: 2, out_ch: 4 },
                Layer::SiLU,
                Layer::Conv3x3 { in_ch: 4, out_ch: 2 },
            ]),
            (2, 3, 3),
            41,
        ),
        (
            Stack::new(vec![
                Layer::Dense { input: 12, output: 8 },
                Layer::ReLU,
                Layer::Dense { input: 8, output: 4 },
            ]),
            (12, 1, 1),
            42,
        ),
        (
            Stack::new(vec![
                Layer::Conv3x3 { in_ch: 1, out_ch: 3 },
                Layer::ReLU,
                Layer::Dense { input: 27, output: 5 },
                Layer::SiLU,
                Layer::Dense { input: 5, output: 2 },
            ]),
            (1, 3, 3),
            43,
        ),
    ]
}

fn seeded_values(n: usize, seed: u64, scale: f32) -> Vec<f32> {
    let mut rng = RngState::new(seed);
    (0..n).map(|_| rng.normal_f32() * scale).collect()
}

/// Sum-of-squares loss through a stack at f64.
fn loss_f64(stack: &Stack, params: &[f64], input: &[f64], dims: (usize, usize, usize)) -> f64 {
    let (out, _) = stack.forward(params, input.to_vec(), dims).unwrap();
    out.iter().map(|&v| v * v).sum()
}

/// Checks f32 reverse-mode gradients for every parameter against central
/// finite differences of the f64 evaluation (step 1e-3), returning
/// (parameters checked, worst relative error).
pub fn gradcheck_stacks_f32() -> (usize, f64) {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (stack, dims, seed) in gradcheck_cases() {
        let params32 = seeded_values(stack.param_len(), seed, 0.4);
        let input32 = seeded_values(dims.0 * dims.1 * dims.2, seed + 100, 1.0);

        let (out, cache) = stack.forward(&params32, input32.clone(), dims).unwrap();
        let grad_out: Vec<f32> = out.iter().map(|&v| 2.0 * v).collect();
        let mut grad = vec![0.0f32; stack.param_len()];
        stack.backward(&params32, &cache, grad_out, &mut grad).unwrap();

        let params64: Vec<f64> = params32.iter().map(|&v| v as f64).collect();
        let input64: Vec<f64> = input32.iter().map(|&v| v as f64).collect();
        let eps = 1e-3f64;
        for i in 0..params64.len() {
            let mut p = params64.clone();
            p[i] += eps;
            let up = loss_f64(&stack, &p, &input64, dims);
            p[i] -= 2.0 * eps;
            let down = loss_f64(&stack, &p, &input64, dims);
            let fd = (up - down) / (2.0 * eps);
            let ad = grad[i] as f64;
            checked += 1;
            if ad.abs().max(fd.abs()) < 1e-9 {
                continue; // both zero (inactive ReLU unit)
            }
            worst = worst.max((ad - fd).abs() / ad.abs().max(fd.abs()));
        }
    }
    (checked, worst)
}

/// Same check with the whole computation at f64 and step 1e-5.
pub fn gradcheck_stacks_f64() -> (usize, f64) {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (stack, dims, seed) in gradcheck_cases() {
        let params: Vec<f64> = seeded_values(stack.param_len(), seed, 0.4)
            .iter()
            .map(|&v| v as f64)
            .collect();
        let input: Vec<f64> = seeded_values(dims.0 * dims.1 * dims.2, seed + 100, 1.0)
            .iter()
            .map(|&v| v as f64)
            .collect();

        let (out, cache) = stack.forward(&params, input.clone(), dims).unwrap();
        let grad_out: Vec<f64> = out.iter().map(|&v| 2.0 * v).collect();
        let mut grad = vec![0.0f64; stack.param_len()];
        stack.backward(&params, &cache, grad_out, &mut grad).unwrap();

        let eps = 1e-5f64;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss_f64(&stack, &p, &input, dims);
            p[i] -= 2.0 * eps;
            let down = loss_f64(&stack, &p, &input, dims);
            let fd = (up - down) / (2.0 * eps);
            let ad = grad[i];
            checked += 1;
            if ad.abs().max(fd.abs()) < 1e-10 {
                continue;
            }
            worst = worst.max((ad - fd).abs() / ad.abs().max(fd.abs()));
        }
    }
    (checked, worst)
}

pub struct TrainedScalar {
    pub checkpoint: Checkpoint,
    pub d: Dim,
    pub steps: u64,
    pub train_seconds: f64,
    /// Target statistics the model was normalized with.
    pub mean: f64,
    pub std: f64,
}

static SCALAR_MODEL: OnceLock<TrainedScalar> = OnceLock::new();

/// Conditional model on the scalar task (s = 0.5), trained once and shared.
pub fn train_scalar_model() -> &'static TrainedScalar {
    SCALAR_MODEL.get_or_init(|| {
        let dataset =
            make_point_task(&PointTask::ScalarGauss { s: 0.5 }, 4000, &mut RngState::new(2001))
                .unwrap();
        let d = Dim::Finite(64);
        let cfg = TrainConfig {
            batch_size: 16,
            iterations: 3000,
            d,
            prior: SigmaPrior::default(),
            seed: 2002,
            patch_size: None,
            lr: 1e-3,
            ema_decay: 0.999,
            sigma_data: 0.5,
            net: NetworkSpec { channels: 8, depth: 3, embed_dim: 8 },
            log_every: 500,
            checkpoint_every: 0,
            val_every: 0,
        };
        let start = Instant::now();
        let out = train_loop(&dataset, &cfg, None, None, "acceptance-scalar").unwrap();
        TrainedScalar {
            checkpoint: out.checkpoint,
            d,
            steps: cfg.iterations,
            train_seconds: start.elapsed().as_secs_f64(),
            mean: dataset.mean,
            std: dataset.std,
        }
    })
}

/// Least-squares slope of target on condition over a scalar dataset.
pub fn regression_slope(ds: &PairedDataset) -> f64 {
    let c: Vec<f64> = ds.conditions.iter().map(|t| t.data()[0] as f64).collect();
    let y: Vec<f64> = ds.targets.iter().map(|t| t.data()[0] as f64).collect();
    let mc = c.iter().sum::<f64>() / c.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let cov: f64 = c.iter().zip(&y).map(|(&a, &b)| (a - mc) * (b - my)).sum();
    let var: f64 = c.iter().map(|&a| (a - mc) * (a - mc)).sum();
    cov / var
}
