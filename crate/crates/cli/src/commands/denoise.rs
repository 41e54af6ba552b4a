use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use pflow_core::data::{denormalize, load_dataset, normalize};
use pflow_core::io::{read_tensor, write_pgm, write_tensor};
use pflow_core::nn::{load_checkpoint, NetDenoiser};
use pflow_core::rng::RngState;
use pflow_core::sampler::{nfe_formula, ppfm_sample, SampleConfig, SampleMode};
use pflow_core::schedule::make_schedule;
use pflow_core::tensor::Tensor;

use crate::config::{RunConfig, UsageError};

use super::claim_out_dir;

pub struct SamplerSetup {
    pub cfg: SampleConfig,
    pub tau: usize,
}

/// Builds the sampler configuration shared by denoise/ablate/grid-search.
pub fn sampler_setup(config: &RunConfig) -> Result<SamplerSetup> {
    let t_steps = config.usize("sample.T")?;
    let schedule = make_schedule(
        t_steps,
        config.f64("schedule.sigma_min")?,
        config.f64("schedule.sigma_max")?,
        config.f64("schedule.rho")?,
    )?;
    let tau_raw = config.i64("sample.tau")?;
    let tau = if tau_raw < 0 {
        t_steps - 1
    } else {
        let t = tau_raw as usize;
        if t >= t_steps {
            bail!(UsageError(format!("sample.tau = {t} outside 0..{t_steps}")));
        }
        t
    };
    let mode = match config.str("sample.mode") {
        "hijacked" => SampleMode::Hijacked,
        "from_prior" => SampleMode::FromPrior,
        other => bail!(UsageError(format!(
            "sample.mode = {other:?} is not hijacked | from_prior"
        ))),
    };
    Ok(SamplerSetup {
        cfg: SampleConfig {
            schedule,
            tau,
            w: config.f64("sample.w")?,
            mode,
            d: config.dim()?,
            record_states: false,
        },
        tau,
    })
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
    let (mean, std) = (dataset.mean, dataset.std);

    // Inputs: explicit tensor directory, else the dataset conditions.
    let inputs: Vec<(String, Tensor)> = match config.optional_path("paths.input") {
        Some(dir) => read_tensor_dir(&dir)?,
        None => dataset
            .conditions
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("{i:04}"), c.clone()))
            .collect(),
    };

    let setup = sampler_setup(config)?;
    let den = NetDenoiser {
        net: ckpt.ema_network()?,
        pc: ckpt.pc,
    };
    let seed = config.u64("seed")?;

    std::fs::create_dir_all(out.join("denoised"))?;
    std::fs::create_dir_all(out.join("previews"))?;
    let (view_lo, view_hi) = (config.f32("view.lo")?, config.f32("view.hi")?);

    let results: Vec<(String, Tensor, u64)> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, (name, c))| {
            let mut rng = RngState::with_stream(seed, 10_000 + i as u64);
            let c_norm = normalize(c, mean, std);
            let (x, trace) = ppfm_sample(&c_norm, &den, &setup.cfg, &mut rng)?;
            Ok((name.clone(), denormalize(&x, mean, std), trace.nfe))
        })
        .collect::<pflow_core::Result<_>>()?;

    let mut nfe_report = format!(
        "T {}\ntau {}\nformula_nfe {}\n",
        setup.cfg.schedule.steps(),
        setup.tau,
        expected_nfe(&setup)
    );
    for (name, tensor, nfe) in &results {
        write_tensor(&out.join("denoised").join(format!("{name}.pft")), tensor)?;
        if tensor.rank() >= 2 {
            write_pgm(
                &out.join("previews").join(format!("{name}.pgm")),
                tensor,
                view_lo,
                view_hi,
            )?;
        }
        nfe_report.push_str(&format!("{name} {nfe}\n"));
    }
    std::fs::write(out.join("nfe_report.txt"), nfe_report)?;
    println!(
        "denoised {} items (NFE = {} each) into {}",
        results.len(),
        expected_nfe(&setup),
        out.display()
    );
    Ok(())
}

fn expected_nfe(setup: &SamplerSetup) -> u64 {
    match setup.cfg.mode {
        SampleMode::Hijacked => nfe_formula(setup.cfg.schedule.steps(), setup.tau),
        SampleMode::FromPrior => nfe_formula(setup.cfg.schedule.steps(), 0),
    }
}

pub fn read_tensor_dir(dir: &PathBuf) -> Result<Vec<(String, Tensor)>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pft"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("{} contains no .pft tensors", dir.display());
    }
    names
        .into_iter()
        .map(|n| {
            let t = read_tensor(&dir.join(&n))?;
            Ok((n.trim_end_matches(".pft").to_string(), t))
        })
        .collect()
}
