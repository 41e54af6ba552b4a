use std::fmt::Write as _;

use anyhow::{Context, Result};
use rayon::prelude::*;

use pflow_core::data::{denormalize, load_dataset, normalize, split_indices};
use pflow_core::io::write_pgm;
use pflow_core::metrics::{psnr, ssim};
use pflow_core::nn::{load_checkpoint, NetDenoiser};
use pflow_core::rng::RngState;
use pflow_core::sampler::{heun_trajectory, nfe_formula};
use pflow_core::schedule::make_schedule;
use pflow_core::tensor::Tensor;
use pflow_core::Dim;

use crate::config::RunConfig;

use super::claim_out_dir;

struct Arm {
    name: &'static str,
    t_steps: usize,
    hijack: bool,
    w: f64,
}

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
    let (_, val_idx) = split_indices(dataset.len());
    let val: Vec<(&Tensor, &Tensor)> = val_idx
        .iter()
        .map(|&i| (&dataset.targets[i], &dataset.conditions[i]))
        .collect();

    let den = NetDenoiser {
        net: ckpt.ema_network()?,
        pc: ckpt.pc,
    };
    let t_main = config.usize("sample.T")?;
    let w_reg = config.f64("sample.w")?;

    let mut arms = vec![
        Arm { name: "hijack+reg", t_steps: t_main, hijack: true, w: w_reg },
        Arm { name: "hijack_only", t_steps: t_main, hijack: true, w: 1.0 },
        Arm { name: "reg_only", t_steps: t_main, hijack: false, w: w_reg },
        Arm { name: "no_hijack_no_reg", t_steps: t_main, hijack: false, w: 1.0 },
    ];
    for t in config.usize_list("ablate.T_sweep")? {
        arms.push(Arm { name: "from_prior_sweep", t_steps: t, hijack: false, w: 1.0 });
    }

    let seed = config.u64("seed")?;
    let d = config.dim()?;
    let (view_lo, view_hi) = (config.f32("view.lo")?, config.f32("view.hi")?);
    std::fs::create_dir_all(out.join("panels"))?;

    let mut csv = String::from("arm,T,tau,w,nfe,psnr_mean,ssim_mean\n");
    for arm in &arms {
        let (scores, first_output) = run_arm(arm, &val, &den, &dataset_stats(&dataset), config, seed, d)?;
        let n = scores.len() as f64;
        let psnr_mean = scores.iter().map(|s| s.0).sum::<f64>() / n;
        let ssim_mean = scores.iter().map(|s| s.1).sum::<f64>() / n;
        let (tau, nfe) = if arm.hijack {
            (arm.t_steps - 1, nfe_formula(arm.t_steps, arm.t_steps - 1))
        } else {
            (0, nfe_formula(arm.t_steps, 0))
        };
        writeln!(
            csv,
            "{},{},{tau},{},{nfe},{psnr_mean},{ssim_mean}",
            arm.name, arm.t_steps, arm.w
        )
        .unwrap();
        if let Some(img) = first_output {
            if img.rank() >= 2 {
                let panel = out
                    .join("panels")
                    .join(format!("{}_T{}.pgm", arm.name, arm.t_steps));
                write_pgm(&panel, &img, view_lo, view_hi)?;
            }
        }
        println!(
            "{:<18} T={:<3} w={:<4} NFE={:<4} PSNR {:.3} dB  SSIM {:.4}",
            arm.name, arm.t_steps, arm.w, nfe, psnr_mean, ssim_mean
        );
    }
    std::fs::write(out.join("ablation.csv"), &csv)?;
    println!("wrote {}", out.join("ablation.csv").display());
    Ok(())
}

fn dataset_stats(ds: &pflow_core::data::PairedDataset) -> (f64, f64) {
    (ds.mean, ds.std)
}

#[allow(clippy::too_many_arguments)]
fn run_arm(
    arm: &Arm,
    val: &[(&Tensor, &Tensor)],
    den: &NetDenoiser,
    stats: &(f64, f64),
    config: &RunConfig,
    seed: u64,
    d: Dim,
) -> Result<(Vec<(f64, f64)>, Option<Tensor>)> {
    let schedule = make_schedule(
        arm.t_steps,
        config.f64("schedule.sigma_min")?,
        config.f64("schedule.sigma_max")?,
        config.f64("schedule.rho")?,
    )?;
    let (mean, std) = *stats;

    let outputs: Vec<Tensor> = val
        .par_iter()
        .enumerate()
        .map(|(i, (_, c))| {
            let mut rng = RngState::with_stream(seed, 20_000 + i as u64);
            let c_norm = normalize(c, mean, std);
            let x = if arm.hijack {
                let tau = arm.t_steps - 1;
                let (x, _) = heun_trajectory(
                    c_norm.clone(),
                    tau,
                    arm.w,
                    &c_norm,
                    &schedule,
                    den,
                    &c_norm,
                    false,
                )?;
                x
            } else {
                // From-prior trajectory; the regularized arm still mixes
                // toward the condition image.
                let draw = pflow_core::geometry::sample_prior(
                    c_norm.len(),
                    d,
                    schedule.sigma_max,
                    &mut rng,
                )?
                .reshape(c_norm.shape().to_vec())?;
                let (x, _) =
                    heun_trajectory(draw, 0, arm.w, &c_norm, &schedule, den, &c_norm, false)?;
                x
            };
            Ok(denormalize(&x, mean, std))
        })
        .collect::<pflow_core::Result<_>>()?;

    let mut scores = Vec::with_capacity(val.len());
    for ((y, _), x) in val.iter().zip(&outputs) {
        let range_cfg = config.f64("eval.data_range")?;
        let range = if range_cfg > 0.0 {
            range_cfg
        } else {
            (y.max() - y.min()) as f64
        };
        let p = psnr(y, x, Some(range))?;
        let s = ssim(y, x, range)?;
        scores.push((p, s));
    }
    Ok((scores, outputs.into_iter().next()))
}
