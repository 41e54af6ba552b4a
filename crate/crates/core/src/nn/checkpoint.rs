//! Checkpoint directory layout: the parameter, EMA, and Adam-moment vectors
//! as tensor files plus a plain-text manifest describing the architecture
//! and training position.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::nn::network::{Network, NetworkSpec};
use crate::nn::optim::OptimizerState;
use crate::nn::precond::Preconditioner;
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: Network,
    pub opt: OptimizerState,
    pub pc: Preconditioner,
    pub step: u64,
    pub config_hash: String,
}

impl Checkpoint {
    /// Network with the EMA parameters, the ones used for evaluation.
    pub fn ema_network(&self) -> Result<Network> {
        self.net.with_params(self.opt.ema_params.clone())
    }
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_tensor(&dir.join("params.pft"), &Tensor::from_slice(&ckpt.net.params))?;
    write_tensor(&dir.join("ema.pft"), &Tensor::from_slice(&ckpt.opt.ema_params))?;
    write_tensor(&dir.join("adam_m.pft"), &Tensor::from_slice(&ckpt.opt.m))?;
    write_tensor(&dir.join("adam_v.pft"), &Tensor::from_slice(&ckpt.opt.v))?;

    let spec = ckpt.net.spec;
    let mut manifest = String::new();
    writeln!(manifest, "channels {}", spec.channels).unwrap();
    writeln!(manifest, "depth {}", spec.depth).unwrap();
    writeln!(manifest, "embed_dim {}", spec.embed_dim).unwrap();
    writeln!(manifest, "sigma_data {}", ckpt.pc.sigma_data).unwrap();
    writeln!(manifest, "step {}", ckpt.step).unwrap();
    writeln!(manifest, "lr {}", ckpt.opt.lr).unwrap();
    writeln!(manifest, "ema_decay {}", ckpt.opt.ema_decay).unwrap();
    writeln!(manifest, "config_hash {}", ckpt.config_hash).unwrap();
    writeln!(
        manifest,
        "layer_spec conv3x3(2->{ch}) + {mid}x[silu conv3x3({ch}->{ch})] + silu conv3x3({ch}->1), embed dense(1->{e})-silu-dense({e}->{ch})",
        ch = spec.channels,
        mid = spec.depth - 1,
        e = spec.embed_dim,
    )
    .unwrap();
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut channels = None;
    let mut depth = None;
    let mut embed_dim = None;
    let mut sigma_data = None;
    let mut step = None;
    let mut lr = None;
    let mut ema_decay = None;
    let mut config_hash = String::new();
    for line in manifest.lines() {
        let mut parts = line.splitn(2, ' ');
        let key = parts.next().unwrap_or("");
        let value = parts.next().unwrap_or("").trim();
        match key {
            "channels" => channels = value.parse::<usize>().ok(),
            "depth" => depth = value.parse::<usize>().ok(),
            "embed_dim" => embed_dim = value.parse::<usize>().ok(),
            "sigma_data" => sigma_data = value.parse::<f64>().ok(),
            "step" => step = value.parse::<u64>().ok(),
            "lr" => lr = value.parse::<f64>().ok(),
            "ema_decay" => ema_decay = value.parse::<f64>().ok(),
            "config_hash" => config_hash = value.to_string(),
            _ => {}
        }
    }
    let spec = NetworkSpec {
        channels: require(channels, dir, "channels")?,
        depth: require(depth, dir, "depth")?,
        embed_dim: require(embed_dim, dir, "embed_dim")?,
    };
    let params = read_tensor(&dir.join("params.pft"))?.into_data();
    let ema = read_tensor(&dir.join("ema.pft"))?.into_data();
    let m = read_tensor(&dir.join("adam_m.pft"))?.into_data();
    let v = read_tensor(&dir.join("adam_v.pft"))?.into_data();

    // A throwaway init gives us the layer layout; parameters are replaced.
    let mut scratch = RngState::new(0);
    let template = Network::new(spec, &mut scratch);
    if params.len() != template.param_len() {
        return Err(Error::Format(format!(
            "{}: manifest implies {} parameters, file has {}",
            dir.display(),
            template.param_len(),
            params.len()
        )));
    }
    if ema.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Format(format!(
            "{}: parameter/moment tensor lengths disagree",
            dir.display()
        )));
    }
    let net = template.with_params(params)?;
    let mut opt = OptimizerState::new(
        &net.params,
        require(lr, dir, "lr")?,
        require(ema_decay, dir, "ema_decay")?,
    );
    opt.m = m;
    opt.v = v;
    opt.ema_params = ema;
    let step = require(step, dir, "step")?;
    opt.step = step;
    Ok(Checkpoint {
        net,
        opt,
        pc: Preconditioner::new(require(sigma_data, dir, "sigma_data")?)?,
        step,
        config_hash,
    })
}

fn require<T>(v: Option<T>, dir: &Path, key: &str) -> Result<T> {
    v.ok_or_else(|| {
        Error::Format(format!(
            "{}: manifest missing or invalid key {key:?}",
            dir.display()
        ))
    })
}
