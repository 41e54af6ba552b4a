//! Second-order Heun ODE sampling with hijacking and regularization, the
//! from-prior path used in ablations, NFE accounting, and the (T, w) grid
//! search for the single-step configuration.

use crate::data::PairedDataset;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::geometry::{sample_prior, Dim};
use crate::metrics;
use crate::rng::RngState;
use crate::schedule::{make_schedule, Schedule};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Start at step tau by injecting the condition image directly.
    Hijacked,
    /// Start from a prior draw at t_0; forces w = 1 since regularizing
    /// toward a noise draw is meaningless.
    FromPrior,
}

#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub schedule: Schedule,
    pub tau: usize,
    pub w: f64,
    pub mode: SampleMode,
    pub d: Dim,
    pub record_states: bool,
}

#[derive(Debug, Clone)]
pub struct SampleTrace {
    /// Number of denoiser evaluations made.
    pub nfe: u64,
    pub states: Option<Vec<Tensor>>,
}

/// One Heun step from t_cur to t_next: Euler predictor plus, while
/// t_next > 0, the trapezoidal corrector. Returns the new state and the
/// number of denoiser evaluations (1 or 2).
///
/// The final step to t = 0 reduces algebraically to the denoiser output
/// (x + (0 − t)·(x − D)/t = D) and is computed that way, which keeps the
/// single-step configuration bit-exact.
pub fn heun_step(
    x: &Tensor,
    t_cur: f64,
    t_next: f64,
    c: &Tensor,
    den: &dyn Denoiser,
) -> Result<(Tensor, u64)> {
    if !(t_cur > t_next && t_next >= 0.0) {
        return Err(Error::Domain(format!(
            "need t_cur > t_next >= 0, got {t_cur} -> {t_next}"
        )));
    }
    let den0 = den.evaluate(x, t_cur, c)?;
    den0.validate_finite("denoiser output")?;
    if t_next == 0.0 {
        return Ok((den0, 1));
    }
    let d0 = x.sub(&den0)?.scale((1.0 / t_cur) as f32);
    let dt = (t_next - t_cur) as f32;
    let x_euler = x.add(&d0.scale(dt))?;
    let den1 = den.evaluate(&x_euler, t_next, c)?;
    den1.validate_finite("denoiser output")?;
    let d1 = x_euler.sub(&den1)?.scale((1.0 / t_next) as f32);
    let x_next = x.add(&d0.add(&d1)?.scale(0.5 * dt))?;
    Ok((x_next, 2))
}

/// Runs the Heun loop from step `start`, mixing every iterate toward
/// `anchor` with weight w (x ← w·x + (1−w)·anchor, applied after the final
/// step as well).
pub fn heun_trajectory(
    x0: Tensor,
    start: usize,
    w: f64,
    anchor: &Tensor,
    schedule: &Schedule,
    den: &dyn Denoiser,
    c: &Tensor,
    record_states: bool,
) -> Result<(Tensor, SampleTrace)> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("mixing weight w = {w} outside [0, 1]")));
    }
    let t = schedule.t();
    let steps = schedule.steps();
    if start >= steps {
        return Err(Error::Domain(format!(
            "start index {start} outside 0..{steps}"
        )));
    }
    let wf = w as f32;
    let omw = 1.0 - wf;
    let mut x = x0;
    let mut nfe = 0u64;
    let mut states = record_states.then(|| vec![x.clone()]);
    for i in start..steps {
        let (next, evals) = heun_step(&x, t[i], t[i + 1], c, den).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("step {i}: {msg}")),
            other => other,
        })?;
        nfe += evals;
        x = next.map_zip(anchor, |xv, av| wf * xv + omw * av)?;
        if let Some(s) = states.as_mut() {
            s.push(x.clone());
        }
    }
    Ok((x, SampleTrace { nfe, states }))
}

/// Posterior sampling with hijacking and regularization. In `Hijacked` mode
/// the trajectory starts at x_tau = c; in `FromPrior` mode it starts at a
/// prior draw with tau = 0 and w = 1.
pub fn ppfm_sample(
    c: &Tensor,
    den: &dyn Denoiser,
    cfg: &SampleConfig,
    rng: &mut RngState,
) -> Result<(Tensor, SampleTrace)> {
    let steps = cfg.schedule.steps();
    if cfg.tau >= steps {
        return Err(Error::Domain(format!(
            "tau = {} outside 0..{steps}",
            cfg.tau
        )));
    }
    match cfg.mode {
        SampleMode::Hijacked => {
            c.validate_finite("condition image")?;
            heun_trajectory(
                c.clone(),
                cfg.tau,
                cfg.w,
                c,
                &cfg.schedule,
                den,
                c,
                cfg.record_states,
            )
        }
        SampleMode::FromPrior => {
            let draw = sample_prior(c.len(), cfg.d, cfg.schedule.sigma_max, rng)?
                .reshape(c.shape().to_vec())?;
            let anchor = draw.clone();
            heun_trajectory(
                draw,
                0,
                1.0,
                &anchor,
                &cfg.schedule,
                den,
                c,
                cfg.record_states,
            )
        }
    }
}

/// Expected evaluation count for a trajectory hijacked at tau.
pub fn nfe_formula(t_steps: usize, tau: usize) -> u64 {
    (2 * (t_steps - tau) - 1) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMetric {
    Psnr,
    Ssim,
    Mse,
}

impl std::str::FromStr for GridMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "psnr" => Ok(GridMetric::Psnr),
            "ssim" => Ok(GridMetric::Ssim),
            "mse" => Ok(GridMetric::Mse),
            other => Err(Error::Domain(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub t_steps: usize,
    pub w: f64,
    pub score: f64,
    pub nfe: u64,
}

/// Evaluates the single-step configuration (tau = T−1) on every (T, w) cell
/// of the grid and returns the best cell plus the full table. Ties break
/// toward smaller T, then larger w.
pub fn grid_search(
    val: &PairedDataset,
    den: &dyn Denoiser,
    t_set: &[usize],
    w_set: &[f64],
    metric: GridMetric,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
) -> Result<(usize, f64, Vec<GridRow>)> {
    if t_set.is_empty() || w_set.is_empty() {
        return Err(Error::Domain("grid sets must be nonempty".into()));
    }
    let mut rows = Vec::with_capacity(t_set.len() * w_set.len());
    let mut best: Option<GridRow> = None;
    for &t_steps in t_set {
        let schedule = make_schedule(t_steps, sigma_min, sigma_max, rho)?;
        let t_last = schedule.t()[t_steps - 1];
        // The denoiser sees the condition once per item; mixing is reused
        // across w cells.
        let outputs: Vec<Tensor> = val
            .conditions
            .iter()
            .map(|c| den.evaluate(c, t_last, c))
            .collect::<Result<_>>()?;
        for &w in w_set {
            let wf = w as f32;
            let omw = 1.0 - wf;
            let mut total = 0.0f64;
            for ((y, c), out) in val.targets.iter().zip(&val.conditions).zip(&outputs) {
                let mixed = out.map_zip(c, |ov, cv| wf * ov + omw * cv)?;
                total += score_one(y, &mixed, metric)?;
            }
            let row = GridRow {
                t_steps,
                w,
                score: total / val.len() as f64,
                nfe: 1,
            };
            let replace = match &best {
                None => true,
                Some(b) => {
                    if improved(row.score, b.score, metric) {
                        true
                    } else if row.score == b.score {
                        row.t_steps < b.t_steps || (row.t_steps == b.t_steps && row.w > b.w)
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some(row.clone());
            }
            rows.push(row);
        }
    }
    let best = best.expect("nonempty grid");
    Ok((best.t_steps, best.w, rows))
}

fn improved(candidate: f64, incumbent: f64, metric: GridMetric) -> bool {
    match metric {
        GridMetric::Psnr | GridMetric::Ssim => candidate > incumbent,
        GridMetric::Mse => candidate < incumbent,
    }
}

fn score_one(y: &Tensor, out: &Tensor, metric: GridMetric) -> Result<f64> {
    match metric {
        GridMetric::Psnr => metrics::psnr(y, out, None),
        GridMetric::Ssim => {
            let range = (y.max() - y.min()) as f64;
            metrics::ssim(y, out, range)
        }
        GridMetric::Mse => metrics::mse(y, out),
    }
}

pub fn grid_csv(rows: &[GridRow], metric: GridMetric) -> String {
    let name = match metric {
        GridMetric::Psnr => "psnr",
        GridMetric::Ssim => "ssim",
        GridMetric::Mse => "mse",
    };
    let mut out = format!("T,w,{name},nfe\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.t_steps, r.w, r.score, r.nfe));
    }
    out
}
