use anyhow::{Context, Result};
use pflow_core::data::load_dataset;
use pflow_core::nn::load_checkpoint;
use pflow_core::train::train_loop;

use crate::config::RunConfig;

use super::claim_out_dir;

pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let dataset_dir = config.path("paths.dataset")?;
    let out = config.path("paths.out")?;
    claim_out_dir(&out, force)?;
    config.log_into(&out)?;

    let dataset = load_dataset(&dataset_dir)
        .with_context(|| format!("loading dataset {}", dataset_dir.display()))?;
    let cfg = config.train_config()?;
    let resume = match config.optional_path("paths.checkpoint") {
        Some(dir) => Some(
            load_checkpoint(&dir).with_context(|| format!("resuming from {}", dir.display()))?,
        ),
        None => None,
    };
    let start_step = resume.as_ref().map_or(0, |c| c.step);

    let output = train_loop(&dataset, &cfg, Some(&out), resume, &config.hash())
        .context("training failed")?;
    let final_loss = output.log.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} steps (resumed at {start_step}), final loss {final_loss:.6}, checkpoint at {}",
        cfg.iterations,
        out.join("ckpt_final").display()
    );
    Ok(())
}
