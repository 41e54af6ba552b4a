use anyhow::{bail, Context, Result};
use pflow_core::data::{
    degrade, make_phantom, make_point_task, save_dataset, DegradeModel, PairedDataset,
    PhantomSpec, PointTask,
};
use pflow_core::rng::RngState;

use crate::config::RunConfig;

use super::claim_out_dir;

pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let out = config.path("paths.out")?;
    claim_out_dir(&out, force)?;
    config.log_into(&out)?;

    let seed = config.u64("seed")?;
    let count = config.usize("gen.count")?;
    let kind = config.str("gen.kind");

    let dataset = match kind {
        "phantom" => phantom_dataset(config, seed, count)?,
        "scalar_gauss" => make_point_task(
            &PointTask::ScalarGauss { s: config.f64("gen.s")? },
            count,
            &mut RngState::with_stream(seed, 0),
        )?,
        "gmm2d" => make_point_task(
            &PointTask::Gmm2d {
                k: config.usize("gen.k")?,
                spread: config.f64("gen.spread")?,
                comp_std: config.f64("gen.comp_std")?,
                s: config.f64("gen.s")?,
            },
            count,
            &mut RngState::with_stream(seed, 0),
        )?,
        other => bail!("gen.kind = {other:?} is not one of phantom | gmm2d | scalar_gauss"),
    };

    let manifest = format!(
        "kind {kind}\nseed {seed}\ncount {count}\nconfig_hash {}\n",
        config.hash()
    );
    save_dataset(&out, &dataset, &manifest).context("writing dataset")?;
    println!(
        "wrote {} target/condition pairs to {}",
        dataset.len(),
        out.display()
    );
    Ok(())
}

fn phantom_dataset(config: &RunConfig, seed: u64, count: usize) -> Result<PairedDataset> {
    let spec = PhantomSpec {
        side: config.usize("gen.side")?,
        n_ellipses: config.usize("gen.n_ellipses")?,
        lo: config.f32("gen.lo")?,
        hi: config.f32("gen.hi")?,
    };
    let model = match config.str("gen.noise") {
        "gaussian" => DegradeModel::Gaussian { sigma_n: config.f64("gen.sigma_n")? },
        "poisson_gauss" => DegradeModel::PoissonGauss {
            i0: config.f64("gen.i0")?,
            sigma_e: config.f64("gen.sigma_e")?,
            scale: config.f64("gen.scale")?,
        },
        other => bail!("gen.noise = {other:?} is not one of gaussian | poisson_gauss"),
    };
    let mut targets = Vec::with_capacity(count);
    let mut conditions = Vec::with_capacity(count);
    for i in 0..count {
        // Independent streams per item keep generation order-insensitive.
        let mut rng = RngState::with_stream(seed, 100 + i as u64);
        let y = make_phantom(&spec, &mut rng)?;
        let c = degrade(&y, &model, &mut rng)?;
        targets.push(y);
        conditions.push(c);
    }
    Ok(PairedDataset::new(targets, conditions)?)
}
