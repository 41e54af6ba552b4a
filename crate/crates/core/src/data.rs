//! Synthetic paired datasets: procedurally generated ellipse phantoms with a
//! noise degradation operator, and low-dimensional point tasks with analytic
//! posteriors for verification.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::Distribution;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Indexed (target, condition) pairs plus target statistics.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub targets: Vec<Tensor>,
    pub conditions: Vec<Tensor>,
    pub mean: f64,
    pub std: f64,
}

impl PairedDataset {
    pub fn new(targets: Vec<Tensor>, conditions: Vec<Tensor>) -> Result<Self> {
        if targets.len() != conditions.len() {
            return Err(Error::Dimension(format!(
                "{} targets but {} conditions",
                targets.len(),
                conditions.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::Domain("dataset must be nonempty".into()));
        }
        let shape = targets[0].shape().to_vec();
        for t in targets.iter().chain(conditions.iter()) {
            if t.shape() != shape {
                return Err(Error::Dimension("dataset shapes are inconsistent".into()));
            }
        }
        let (mean, std) = target_stats(&targets)?;
        Ok(Self {
            targets,
            conditions,
            mean,
            std,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Dataset mapped to normalized units (x − mean)/std, stats preserved
    /// so outputs can be mapped back.
    pub fn normalized(&self) -> Self {
        let f = |t: &Tensor| normalize(t, self.mean, self.std);
        Self {
            targets: self.targets.iter().map(f).collect(),
            conditions: self.conditions.iter().map(f).collect(),
            mean: self.mean,
            std: self.std,
        }
    }
}

/// Statistics are computed from targets only; conditions share the units.
fn target_stats(targets: &[Tensor]) -> Result<(f64, f64)> {
    let n: usize = targets.iter().map(Tensor::len).sum();
    let mean = targets.iter().map(Tensor::sum).sum::<f64>() / n as f64;
    let var = targets
        .iter()
        .flat_map(|t| t.data().iter())
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std <= 0.0 {
        return Err(Error::Domain("target standard deviation is zero".into()));
    }
    Ok((mean, std))
}

pub fn normalize(t: &Tensor, mean: f64, std: f64) -> Tensor {
    t.map(|v| ((v as f64 - mean) / std) as f32)
}

pub fn denormalize(t: &Tensor, mean: f64, std: f64) -> Tensor {
    t.map(|v| (v as f64 * std + mean) as f32)
}

/// Procedural ellipse-phantom parameters, in HU-like arbitrary units.
#[derive(Debug, Clone, Copy)]
pub struct PhantomSpec {
    pub side: usize,
    pub n_ellipses: usize,
    pub lo: f32,
    pub hi: f32,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.side < 16 {
            return Err(Error::Domain(format!("side {} must be at least 16", self.side)));
        }
        if self.lo >= self.hi {
            return Err(Error::Domain(format!(
                "intensity range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Sum of randomly placed anti-aliased ellipses, clipped to [lo, hi].
pub fn make_phantom(spec: &PhantomSpec, rng: &mut RngState) -> Result<Tensor> {
    spec.validate()?;
    let side = spec.side;
    let range = (spec.hi - spec.lo) as f64;
    let mut img = vec![spec.lo as f64; side * side];
    for _ in 0..spec.n_ellipses {
        let cx = (0.15 + 0.7 * rng.uniform_f64()) * side as f64;
        let cy = (0.15 + 0.7 * rng.uniform_f64()) * side as f64;
        let a = (0.06 + 0.24 * rng.uniform_f64()) * side as f64;
        let b = (0.06 + 0.24 * rng.uniform_f64()) * side as f64;
        let theta = rng.uniform_f64() * std::f64::consts::PI;
        let amp = (0.15 + 0.55 * rng.uniform_f64()) * range * if rng.uniform_f64() < 0.25 { -1.0 } else { 1.0 };
        let (st, ct) = theta.sin_cos();
        let edge = a.min(b);
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let u = (dx * ct + dy * st) / a;
                let v = (-dx * st + dy * ct) / b;
                let f = (u * u + v * v).sqrt();
                // Signed distance to the boundary in pixels, roughly.
                let cover = ((1.0 - f) * edge + 0.5).clamp(0.0, 1.0);
                if cover > 0.0 {
                    img[y * side + x] += amp * cover;
                }
            }
        }
    }
    let data = img
        .into_iter()
        .map(|v| (v as f32).clamp(spec.lo, spec.hi))
        .collect();
    Tensor::new(vec![1, side, side], data)
}

/// Noise degradation operators mapping a clean image to its noisy condition.
#[derive(Debug, Clone, Copy)]
pub enum DegradeModel {
    /// Additive white Gaussian noise of the given standard deviation.
    Gaussian { sigma_n: f64 },
    /// Monoenergetic photon-counting toy model: expected counts
    /// λ = i0·exp(−y/scale), Poisson counts plus electronic noise, mapped
    /// back through the log transform.
    PoissonGauss { i0: f64, sigma_e: f64, scale: f64 },
}

pub fn degrade(y: &Tensor, model: &DegradeModel, rng: &mut RngState) -> Result<Tensor> {
    match *model {
        DegradeModel::Gaussian { sigma_n } => {
            if sigma_n < 0.0 {
                return Err(Error::Domain(format!("sigma_n = {sigma_n} < 0")));
            }
            Ok(y.map_zip_rng(rng, |v, r| v + (sigma_n as f32) * r.normal_f32()))
        }
        DegradeModel::PoissonGauss { i0, sigma_e, scale } => {
            if i0 <= 0.0 {
                return Err(Error::Domain(format!("i0 = {i0} must be > 0")));
            }
            if scale <= 0.0 {
                return Err(Error::Domain(format!("scale = {scale} must be > 0")));
            }
            let mut out = Vec::with_capacity(y.len());
            for &v in y.data() {
                let lambda = i0 * (-(v as f64) / scale).exp();
                let poisson = rand_distr::Poisson::new(lambda)
                    .map_err(|e| Error::Domain(format!("poisson rate {lambda}: {e}")))?;
                let counts = poisson.sample(rng) + sigma_e * rng.normal_f64();
                let k = counts.max(1.0);
                out.push((-scale * (k / i0).ln()) as f32);
            }
            Tensor::new(y.shape().to_vec(), out)
        }
    }
}

trait MapZipRng {
    fn map_zip_rng(&self, rng: &mut RngState, op: impl FnMut(f32, &mut RngState) -> f32) -> Tensor;
}

impl MapZipRng for Tensor {
    fn map_zip_rng(&self, rng: &mut RngState, mut op: impl FnMut(f32, &mut RngState) -> f32) -> Tensor {
        let data = self.data().iter().map(|&v| op(v, rng)).collect();
        Tensor::new(self.shape().to_vec(), data).expect("shape preserved")
    }
}

/// Point tasks with analytic posteriors.
#[derive(Debug, Clone)]
pub enum PointTask {
    /// y ~ N(0,1), c = y + N(0, s²); posterior mean is c/(1+s²).
    ScalarGauss { s: f64 },
    /// y from a K-component 2-D Gaussian mixture, c = y + N(0, s²I).
    /// With k = 1 the component sits at the origin with unit scale, which
    /// reduces to the scalar task per coordinate.
    Gmm2d { k: usize, spread: f64, comp_std: f64, s: f64 },
}

pub fn make_point_task(task: &PointTask, n: usize, rng: &mut RngState) -> Result<PairedDataset> {
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let mut targets = Vec::with_capacity(n);
    let mut conditions = Vec::with_capacity(n);
    match *task {
        PointTask::ScalarGauss { s } => {
            for _ in 0..n {
                let y = rng.normal_f64();
                let c = y + s * rng.normal_f64();
                targets.push(Tensor::from_slice(&[y as f32]));
                conditions.push(Tensor::from_slice(&[c as f32]));
            }
        }
        PointTask::Gmm2d { k, spread, comp_std, s } => {
            if k == 0 {
                return Err(Error::Domain("mixture needs at least one component".into()));
            }
            let means: Vec<[f64; 2]> = if k == 1 {
                vec![[0.0, 0.0]]
            } else {
                (0..k)
                    .map(|j| {
                        let ang = std::f64::consts::TAU * j as f64 / k as f64;
                        [spread * ang.cos(), spread * ang.sin()]
                    })
                    .collect()
            };
            let std = if k == 1 { 1.0 } else { comp_std };
            for _ in 0..n {
                let comp = rng.uniform_usize(k);
                let y = [
                    means[comp][0] + std * rng.normal_f64(),
                    means[comp][1] + std * rng.normal_f64(),
                ];
                let c = [y[0] + s * rng.normal_f64(), y[1] + s * rng.normal_f64()];
                targets.push(Tensor::from_slice(&[y[0] as f32, y[1] as f32]));
                conditions.push(Tensor::from_slice(&[c[0] as f32, c[1] as f32]));
            }
        }
    }
    PairedDataset::new(targets, conditions)
}

/// 64-bit FNV-1a; used for deterministic splits and config hashes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic 80/20 train/validation split by index hash.
pub fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for i in 0..n {
        if fnv1a64(&(i as u64).to_le_bytes()) % 5 == 0 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    if val.is_empty() && n > 1 {
        val.push(train.pop().expect("n > 1"));
    }
    (train, val)
}

/// Writes the dataset directory layout: targets/NNNN.pft,
/// conditions/NNNN.pft, stats.txt, manifest.txt.
pub fn save_dataset(dir: &Path, dataset: &PairedDataset, manifest: &str) -> Result<()> {
    fs::create_dir_all(dir.join("targets"))?;
    fs::create_dir_all(dir.join("conditions"))?;
    for (i, (y, c)) in dataset.targets.iter().zip(&dataset.conditions).enumerate() {
        write_tensor(&dir.join("targets").join(format!("{i:04}.pft")), y)?;
        write_tensor(&dir.join("conditions").join(format!("{i:04}.pft")), c)?;
    }
    let mut stats = String::new();
    writeln!(stats, "mean {}", dataset.mean).unwrap();
    writeln!(stats, "std {}", dataset.std).unwrap();
    fs::write(dir.join("stats.txt"), stats)?;
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<PairedDataset> {
    let mut names: Vec<String> = fs::read_dir(dir.join("targets"))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pft"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Format(format!(
            "{}: no target tensors found",
            dir.display()
        )));
    }
    let mut targets = Vec::with_capacity(names.len());
    let mut conditions = Vec::with_capacity(names.len());
    for n in &names {
        targets.push(read_tensor(&dir.join("targets").join(n))?);
        conditions.push(read_tensor(&dir.join("conditions").join(n))?);
    }
    let mut dataset = PairedDataset::new(targets, conditions)?;
    // Prefer the recorded stats so normalization matches generation time.
    if let Ok(text) = fs::read_to_string(dir.join("stats.txt")) {
        for line in text.lines() {
            let mut parts = line.splitn(2, ' ');
            match (parts.next(), parts.next()) {
                (Some("mean"), Some(v)) => {
                    dataset.mean = v.trim().parse().map_err(|_| {
                        Error::Format(format!("{}: bad mean in stats.txt", dir.display()))
                    })?
                }
                (Some("std"), Some(v)) => {
                    dataset.std = v.trim().parse().map_err(|_| {
                        Error::Format(format!("{}: bad std in stats.txt", dir.display()))
                    })?
                }
                _ => {}
            }
        }
    }
    Ok(dataset)
}
