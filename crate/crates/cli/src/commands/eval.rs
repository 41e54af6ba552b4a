use anyhow::{bail, Context, Result};

use pflow_core::data::load_dataset;
use pflow_core::metrics::{mse, psnr, ssim, MetricReport, MetricRow};
use pflow_core::tensor::Tensor;

use crate::config::RunConfig;

use super::claim_out_dir;
use super::denoise::read_tensor_dir;

pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let input_dir = config.path("paths.input")?;
    let out = config.path("paths.out")?;
    claim_out_dir(&out, force)?;
    config.log_into(&out)?;

    let outputs = read_tensor_dir(&input_dir)?;

    // References: an explicit tensor directory, else the dataset targets.
    let refs: Vec<(String, Tensor)> = match config.optional_path("paths.ref") {
        Some(dir) => read_tensor_dir(&dir)?,
        None => {
            let ds = load_dataset(&config.path("paths.dataset")?)
                .context("loading reference dataset")?;
            ds.targets
                .iter()
                .enumerate()
                .map(|(i, t)| (format!("{i:04}"), t.clone()))
                .collect()
        }
    };
    if refs.len() != outputs.len() {
        bail!(
            "{} outputs but {} references",
            outputs.len(),
            refs.len()
        );
    }

    let range_cfg = config.f64("eval.data_range")?;
    let mut rows = Vec::with_capacity(outputs.len());
    for ((name, test), (_, reference)) in outputs.iter().zip(&refs) {
        let range = if range_cfg > 0.0 {
            range_cfg
        } else {
            (reference.max() - reference.min()) as f64
        };
        rows.push(MetricRow {
            item_id: name.clone(),
            psnr: psnr(reference, test, Some(range))?,
            ssim: ssim(reference, test, range)?,
            mse: mse(reference, test)?,
        });
    }
    let report = MetricReport { rows };
    std::fs::write(out.join("eval.csv"), report.to_csv())?;
    let (pm, ps) = report.mean_std(|r| r.psnr);
    let (sm, ss) = report.mean_std(|r| r.ssim);
    println!(
        "evaluated {} items: PSNR {pm:.3} +- {ps:.3} dB, SSIM {sm:.4} +- {ss:.4}; wrote {}",
        report.rows.len(),
        out.join("eval.csv").display()
    );
    Ok(())
}
