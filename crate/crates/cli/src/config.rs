//! Flat key=value run configuration: one key per line, `#` comments,
//! command-line `--set` overrides, unknown keys rejected. Every command
//! writes the fully resolved configuration next to its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pflow_core::data::fnv1a64;
use pflow_core::geometry::Dim;
use pflow_core::nn::NetworkSpec;
use pflow_core::schedule::SigmaPrior;
use pflow_core::train::TrainConfig;

/// (key, default, help) registry; the single source of truth for known keys.
const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for all stochastic operations"),
    ("paths.dataset", "", "dataset directory (targets/, conditions/, stats.txt)"),
    ("paths.out", "", "output directory for this command"),
    ("paths.checkpoint", "", "checkpoint directory to load"),
    ("paths.input", "", "directory of .pft tensors to process"),
    ("paths.ref", "", "directory of reference .pft tensors"),
    ("model.D", "64", "augmentation dimension: positive integer or inf"),
    ("model.channels", "32", "hidden channels per convolution"),
    ("model.depth", "6", "hidden conv blocks before the final projection"),
    ("model.embed_dim", "32", "noise-embedding hidden width"),
    ("model.sigma_data", "0.5", "preconditioner data scale"),
    ("schedule.T", "8", "number of noise levels"),
    ("schedule.sigma_min", "0.002", "smallest noise level"),
    ("schedule.sigma_max", "80", "largest noise level"),
    ("schedule.rho", "7", "schedule warp exponent"),
    ("prior.p_mean", "-1.2", "log-normal mean of the sigma prior"),
    ("prior.p_std", "1.2", "log-normal std of the sigma prior"),
    ("train.batch_size", "16", "minibatch size"),
    ("train.iterations", "20000", "optimization steps"),
    ("train.patch_size", "32", "square training patch side; 0 = whole image"),
    ("train.lr", "0.0002", "Adam learning rate"),
    ("train.ema_decay", "0.999", "EMA decay for evaluation weights"),
    ("train.log_every", "100", "training-log period"),
    ("train.checkpoint_every", "5000", "checkpoint period; 0 = final only"),
    ("train.val_every", "500", "validation-loss period; 0 = off"),
    ("sample.T", "8", "sampler noise levels"),
    ("sample.tau", "-1", "hijack step; -1 = T-1 (single step)"),
    ("sample.w", "0.7", "regularization mixing weight"),
    ("sample.mode", "hijacked", "hijacked | from_prior"),
    ("gen.kind", "phantom", "phantom | gmm2d | scalar_gauss"),
    ("gen.count", "100", "number of items to generate"),
    ("gen.side", "32", "phantom image side in pixels"),
    ("gen.n_ellipses", "6", "ellipses per phantom"),
    ("gen.lo", "0", "phantom intensity floor"),
    ("gen.hi", "400", "phantom intensity ceiling"),
    ("gen.noise", "gaussian", "degradation: gaussian | poisson_gauss"),
    ("gen.sigma_n", "25", "gaussian degradation std"),
    ("gen.i0", "10000", "photon flux for poisson_gauss"),
    ("gen.sigma_e", "2", "electronic noise std for poisson_gauss"),
    ("gen.scale", "1000", "attenuation scale for poisson_gauss"),
    ("gen.s", "0.5", "condition noise std for point tasks"),
    ("gen.k", "3", "mixture components for gmm2d"),
    ("gen.spread", "2", "mixture mean radius for gmm2d"),
    ("gen.comp_std", "0.5", "mixture component std for gmm2d"),
    ("view.lo", "0", "PGM display window low edge"),
    ("view.hi", "400", "PGM display window high edge"),
    ("grid.T_set", "4,8,16,32,64", "grid-search T values"),
    ("grid.w_set", "0.5,0.6,0.7,0.8,0.9,1.0", "grid-search w values"),
    ("grid.metric", "psnr", "grid-search metric: psnr | ssim | mse"),
    ("ablate.T_sweep", "8,16,32,64", "from-prior T sweep for ablation"),
    ("eval.data_range", "0", "metric data range; 0 = derive from reference"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn resolve(config_path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS
            .iter()
            .map(|(k, d, _)| (k.to_string(), d.to_string()))
            .collect();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = split_kv(line)
                    .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), lineno + 1))?;
                set_known(&mut values, &k, &v)?;
            }
        }
        for s in sets {
            let (k, v) = split_kv(s).ok_or_else(|| anyhow!("--set {s:?}: expected key=value"))?;
            set_known(&mut values, &k, &v)?;
        }
        Ok(Self { values })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.str(key)
            .parse()
            .with_context(|| format!("{key} = {:?} is not an unsigned integer", self.str(key)))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.str(key)
            .parse()
            .with_context(|| format!("{key} = {:?} is not an unsigned integer", self.str(key)))
    }

    pub fn i64(&self, key: &str) -> Result<i64> {
        self.str(key)
            .parse()
            .with_context(|| format!("{key} = {:?} is not an integer", self.str(key)))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.str(key)
            .parse()
            .with_context(|| format!("{key} = {:?} is not a number", self.str(key)))
    }

    pub fn f32(&self, key: &str) -> Result<f32> {
        Ok(self.f64(key)? as f32)
    }

    pub fn dim(&self) -> Result<Dim> {
        Ok(self.str("model.D").parse::<Dim>()?)
    }

    /// Required path key; an empty value is a usage error.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let v = self.str(key);
        if v.is_empty() {
            bail!(UsageError(format!("required config key {key} is not set")));
        }
        Ok(PathBuf::from(v))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.str(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .with_context(|| format!("{key}: bad entry {s:?}"))
            })
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.str(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .with_context(|| format!("{key}: bad entry {s:?}"))
            })
            .collect()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let patch = self.usize("train.patch_size")?;
        Ok(TrainConfig {
            batch_size: self.usize("train.batch_size")?,
            iterations: self.u64("train.iterations")?,
            d: self.dim()?,
            prior: SigmaPrior::new(self.f64("prior.p_mean")?, self.f64("prior.p_std")?)?,
            seed: self.u64("seed")?,
            patch_size: (patch > 0).then_some(patch),
            lr: self.f64("train.lr")?,
            ema_decay: self.f64("train.ema_decay")?,
            sigma_data: self.f64("model.sigma_data")?,
            net: NetworkSpec {
                channels: self.usize("model.channels")?,
                depth: self.usize("model.depth")?,
                embed_dim: self.usize("model.embed_dim")?,
            },
            log_every: self.u64("train.log_every")?.max(1),
            checkpoint_every: self.u64("train.checkpoint_every")?,
            val_every: self.u64("train.val_every")?,
        })
    }

    /// Canonical text form: every key, sorted, one per line.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.resolved_text().as_bytes()))
    }

    /// Writes resolved_config.txt into the directory, creating it first.
    pub fn log_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved_config.txt"), self.resolved_text())?;
        Ok(())
    }
}

fn split_kv(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

fn set_known(values: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    if !values.contains_key(key) {
        bail!(UsageError(format!("unknown config key {key:?}")));
    }
    values.insert(key.to_string(), value.to_string());
    Ok(())
}

/// Marker for errors that should exit with the usage code (2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn key_help() -> String {
    let mut out = String::from("Config keys (key=value, one per line, # comments):\n");
    for (k, d, h) in KEYS {
        writeln!(out, "  {k:<24} default {d:<24} {h}").unwrap();
    }
    out
}
