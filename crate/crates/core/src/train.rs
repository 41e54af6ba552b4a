//! Conditional perturbation training over paired data: sample noise scales,
//! perturb targets through the kernel, and fit the preconditioned denoiser
//! with Adam and EMA.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::geometry::{sample_perturbation, Dim};
use crate::io::image_dims;
use crate::nn::{
    loss_and_grad, save_checkpoint, BatchItem, Checkpoint, Network, NetworkSpec, OptimizerState,
    Preconditioner,
};
use crate::rng::RngState;
use crate::schedule::{sample_sigma, SigmaPrior};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: u64,
    pub d: Dim,
    pub prior: SigmaPrior,
    pub seed: u64,
    /// Square patch side; `None` trains on whole images.
    pub patch_size: Option<usize>,
    pub lr: f64,
    pub ema_decay: f64,
    pub sigma_data: f64,
    pub net: NetworkSpec,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub val_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            iterations: 20_000,
            d: Dim::Finite(64),
            prior: SigmaPrior::default(),
            seed: 0,
            patch_size: Some(32),
            lr: 2e-4,
            ema_decay: 0.999,
            sigma_data: 0.5,
            net: NetworkSpec::default(),
            log_every: 100,
            checkpoint_every: 5_000,
            val_every: 500,
        }
    }
}

/// Identical random window applied to a target/condition pair.
pub fn extract_patches(
    y: &Tensor,
    c: &Tensor,
    patch_size: usize,
    rng: &mut RngState,
) -> Result<(Tensor, Tensor)> {
    let (h, w) = image_dims(y)?;
    if y.shape() != c.shape() {
        return Err(Error::Dimension(format!(
            "paired shapes differ: {:?} vs {:?}",
            y.shape(),
            c.shape()
        )));
    }
    if patch_size > h || patch_size > w {
        return Err(Error::Domain(format!(
            "patch {patch_size} exceeds image {h}x{w}"
        )));
    }
    if patch_size == h && patch_size == w {
        return Ok((y.clone(), c.clone()));
    }
    let top = rng.uniform_usize(h - patch_size + 1);
    let left = rng.uniform_usize(w - patch_size + 1);
    Ok((
        crop(y, top, left, patch_size, h, w),
        crop(c, top, left, patch_size, h, w),
    ))
}

fn crop(t: &Tensor, top: usize, left: usize, size: usize, _h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(size * size);
    for dy in 0..size {
        let row = (top + dy) * w + left;
        data.extend_from_slice(&t.data()[row..row + size]);
    }
    Tensor::new(vec![1, size, size], data).expect("crop sizing")
}

/// Builds the perturbed batch for one step: σ_i from the prior, the kernel
/// draw at r_i = σ_i·√D (or the Gaussian path for D = ∞).
pub fn perturb_batch(
    pairs: &[(Tensor, Tensor)],
    d: Dim,
    prior: &SigmaPrior,
    rng: &mut RngState,
) -> Result<Vec<BatchItem>> {
    let mut batch = Vec::with_capacity(pairs.len());
    for (y, c) in pairs {
        let sigma = sample_sigma(prior, rng);
        let flat = y.reshape(vec![y.len()])?;
        let y_hat = sample_perturbation(&flat, sigma, d, rng)?.reshape(y.shape().to_vec())?;
        batch.push(BatchItem {
            y_hat,
            sigma,
            cond: c.clone(),
            y: y.clone(),
        });
    }
    Ok(batch)
}

/// One optimization step over a batch of (target, condition) pairs in
/// normalized units. Returns the weighted loss.
pub fn train_step(
    net: &mut Network,
    opt: &mut OptimizerState,
    pairs: &[(Tensor, Tensor)],
    cfg: &TrainConfig,
    pc: &Preconditioner,
    rng: &mut RngState,
) -> Result<f64> {
    let batch = perturb_batch(pairs, cfg.d, &cfg.prior, rng)?;
    let (loss, grad) = loss_and_grad(net, &batch, pc).map_err(|e| match e {
        Error::Numeric(msg) => {
            let radii: Vec<String> = batch
                .iter()
                .map(|b| format!("{:.3}", b.y_hat.sub(&b.y).map(|d| d.norm()).unwrap_or(f64::NAN)))
                .collect();
            Error::Numeric(format!("{msg}; perturbation radii [{}]", radii.join(", ")))
        }
        other => other,
    })?;
    opt.adam_step(&mut net.params, &grad)?;
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub wallclock_s: f64,
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub val_log: Vec<(u64, f64)>,
}

/// Runs the full training loop over a dataset (raw units; normalization with
/// target statistics happens here). Minibatches are sampled with
/// replacement. Checkpoints and CSV logs land under `out_dir` when given.
pub fn train_loop(
    dataset: &PairedDataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<Checkpoint>,
    config_hash: &str,
) -> Result<TrainOutput> {
    let normalized = dataset.normalized();
    let (train_idx, val_idx) = crate::data::split_indices(normalized.len());
    let train_idx = if train_idx.is_empty() { vec![0] } else { train_idx };

    let pc = Preconditioner::new(cfg.sigma_data)?;
    let mut init_rng = RngState::with_stream(cfg.seed, 0);
    let (mut net, mut opt, start_step) = match resume {
        Some(ckpt) => {
            let step = ckpt.step;
            (ckpt.net, ckpt.opt, step)
        }
        None => {
            let net = Network::new(cfg.net, &mut init_rng);
            let opt = OptimizerState::new(&net.params, cfg.lr, cfg.ema_decay);
            (net, opt, 0)
        }
    };

    let mut data_rng = RngState::with_stream(cfg.seed, 1).substream(1 + start_step);
    let mut log = Vec::new();
    let mut val_log = Vec::new();
    let start = Instant::now();

    for it in 0..cfg.iterations {
        let step = start_step + it + 1;
        let mut pairs = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let idx = train_idx[data_rng.uniform_usize(train_idx.len())];
            let y = &normalized.targets[idx];
            let c = &normalized.conditions[idx];
            let pair = match cfg.patch_size {
                Some(p) => extract_patches(y, c, p, &mut data_rng)?,
                None => (y.clone(), c.clone()),
            };
            pairs.push(pair);
        }
        let loss = train_step(&mut net, &mut opt, &pairs, cfg, &pc, &mut data_rng)?;

        if step % cfg.log_every == 0 || it + 1 == cfg.iterations {
            log.push(LogRow {
                step,
                loss,
                wallclock_s: start.elapsed().as_secs_f64(),
            });
        }
        if cfg.val_every > 0 && step % cfg.val_every == 0 && !val_idx.is_empty() {
            let v = validation_loss(&net, &normalized, &val_idx, cfg, &pc)?;
            val_log.push((step, v));
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                let ckpt = Checkpoint {
                    net: net.clone(),
                    opt: opt.clone(),
                    pc,
                    step,
                    config_hash: config_hash.to_string(),
                };
                save_checkpoint(&dir.join(format!("ckpt_{step:07}")), &ckpt)?;
            }
        }
    }

    let checkpoint = Checkpoint {
        net,
        opt,
        pc,
        step: start_step + cfg.iterations,
        config_hash: config_hash.to_string(),
    };
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("ckpt_final"), &checkpoint)?;
        std::fs::write(dir.join("train_log.csv"), log_csv(&log))?;
        std::fs::write(dir.join("val_log.csv"), val_csv(&val_log))?;
    }
    Ok(TrainOutput {
        checkpoint,
        log,
        val_log,
    })
}

/// Same weighted loss on a held-out split, with a fixed derived stream so
/// the numbers are comparable across evaluations.
pub fn validation_loss(
    net: &Network,
    normalized: &PairedDataset,
    val_idx: &[usize],
    cfg: &TrainConfig,
    pc: &Preconditioner,
) -> Result<f64> {
    let mut rng = RngState::with_stream(cfg.seed, 2);
    let mut pairs = Vec::new();
    for &idx in val_idx.iter().take(16) {
        let y = &normalized.targets[idx];
        let c = &normalized.conditions[idx];
        pairs.push(match cfg.patch_size {
            Some(p) => extract_patches(y, c, p, &mut rng)?,
            None => (y.clone(), c.clone()),
        });
    }
    let batch = perturb_batch(&pairs, cfg.d, &cfg.prior, &mut rng)?;
    let (loss, _) = loss_and_grad(net, &batch, pc)?;
    Ok(loss)
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("step,loss,wallclock_s\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.step, r.loss, r.wallclock_s).unwrap();
    }
    out
}

fn val_csv(rows: &[(u64, f64)]) -> String {
    let mut out = String::from("step,val_loss\n");
    for (s, v) in rows {
        writeln!(out, "{s},{v}").unwrap();
    }
    out
}
