use anyhow::{Context, Result};

use pflow_core::data::{load_dataset, split_indices, PairedDataset};
use pflow_core::nn::{load_checkpoint, NetDenoiser};
use pflow_core::sampler::{grid_csv, grid_search, GridMetric};

use crate::config::RunConfig;

use super::claim_out_dir;

pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let ckpt_dir = config.path("paths.checkpoint")?;
    let dataset_dir = config.path("paths.dataset")?;
    let out = config.path("paths.out")?;
    claim_out_dir(&out, force)?;
    config.log_into(&out)?;

    let ckpt = load_checkpoint(&ckpt_dir)
        .with_context(|| format!("loading checkpoint {}", ckpt_dir.display()))?;
    let dataset = load_dataset(&dataset_dir)
        .with_context(|| format!("loading dataset {}", dataset_dir.display()))?;

    // Search on the normalized validation split, the units the model sees.
    let normalized = dataset.normalized();
    let (_, val_idx) = split_indices(normalized.len());
    let val = PairedDataset {
        targets: val_idx.iter().map(|&i| normalized.targets[i].clone()).collect(),
        conditions: val_idx.iter().map(|&i| normalized.conditions[i].clone()).collect(),
        mean: normalized.mean,
        std: normalized.std,
    };

    let den = NetDenoiser {
        net: ckpt.ema_network()?,
        pc: ckpt.pc,
    };
    let metric: GridMetric = config.str("grid.metric").parse()?;
    let (t_best, w_best, rows) = grid_search(
        &val,
        &den,
        &config.usize_list("grid.T_set")?,
        &config.f64_list("grid.w_set")?,
        metric,
        config.f64("schedule.sigma_min")?,
        config.f64("schedule.sigma_max")?,
        config.f64("schedule.rho")?,
    )?;
    std::fs::write(out.join("grid.csv"), grid_csv(&rows, metric))?;
    println!(
        "grid search over {} cells selects T = {t_best}, w = {w_best}; wrote {}",
        rows.len(),
        out.join("grid.csv").display()
    );
    Ok(())
}
