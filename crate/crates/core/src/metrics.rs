//! Image-quality and distribution metrics.

use crate::error::{Error, Result};
use crate::io::image_dims;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB. `data_range = None` derives the range
/// from the reference (never from the test image). Zero MSE reports +inf.
pub fn psnr(reference: &Tensor, test: &Tensor, data_range: Option<f64>) -> Result<f64> {
    let mse = mse(reference, test)?;
    let range = match data_range {
        Some(r) => {
            if r <= 0.0 {
                return Err(Error::Domain(format!("data range {r} must be > 0")));
            }
            r
        }
        None => {
            let r = (reference.max() - reference.min()) as f64;
            if r <= 0.0 {
                return Err(Error::Domain(
                    "auto data range is zero on a constant reference".into(),
                ));
            }
            r
        }
    };
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}

/// Mean squared error with f64 accumulation.
pub fn mse(reference: &Tensor, test: &Tensor) -> Result<f64> {
    Ok(reference.distance_sq(test)? / reference.len() as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean local structural similarity over valid window positions, using an
/// 11×11 Gaussian window with σ = 1.5 and the usual k1/k2 stabilizers.
pub fn ssim(reference: &Tensor, test: &Tensor, data_range: f64) -> Result<f64> {
    if reference.shape() != test.shape() {
        return Err(Error::Dimension(format!(
            "shape mismatch: {:?} vs {:?}",
            reference.shape(),
            test.shape()
        )));
    }
    if data_range <= 0.0 {
        return Err(Error::Domain(format!("data range {data_range} must be > 0")));
    }
    let (h, w) = image_dims(reference)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Domain(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let kernel = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let a = reference.data();
    let b = test.data();

    let mut total = 0.0f64;
    let mut count = 0usize;
    for top in 0..=(h - SSIM_WINDOW) {
        for left in 0..=(w - SSIM_WINDOW) {
            let (mut mu_a, mut mu_b) = (0.0f64, 0.0f64);
            let (mut aa, mut bb, mut ab) = (0.0f64, 0.0f64, 0.0f64);
            for dy in 0..SSIM_WINDOW {
                let row = (top + dy) * w + left;
                for dx in 0..SSIM_WINDOW {
                    let k = kernel[dy * SSIM_WINDOW + dx];
                    let va = a[row + dx] as f64;
                    let vb = b[row + dx] as f64;
                    mu_a += k * va;
                    mu_b += k * vb;
                    aa += k * va * va;
                    bb += k * vb * vb;
                    ab += k * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut k = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in -half..=half {
        for x in -half..=half {
            let d2 = (x * x + y * y) as f64;
            k.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let norm: f64 = k.iter().sum();
    for v in &mut k {
        *v /= norm;
    }
    k
}

/// Kolmogorov-Smirnov statistic: sup-norm distance between the empirical CDF
/// of the samples and a reference CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    debug_assert!(samples.len() >= 2);
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - f).abs());
    }
    sup
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    sup
}

/// Sliced Wasserstein-1 distance between two 2-D point clouds: the average
/// over random directions of the exact 1-D W1 between projected samples.
pub fn sliced_wasserstein(
    a: &[[f64; 2]],
    b: &[[f64; 2]],
    n_proj: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("point clouds must be nonempty".into()));
    }
    let mut total = 0.0f64;
    for _ in 0..n_proj {
        let theta = rng.uniform_f64() * std::f64::consts::TAU;
        let (c, s) = (theta.cos(), theta.sin());
        let mut pa: Vec<f64> = a.iter().map(|p| p[0] * c + p[1] * s).collect();
        let mut pb: Vec<f64> = b.iter().map(|p| p[0] * c + p[1] * s).collect();
        pa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        total += w1_sorted(&pa, &pb);
    }
    Ok(total / n_proj as f64)
}

/// Exact W1 between two sorted 1-D empirical distributions of possibly
/// different sizes: the integral of |F_a - F_b| over the merged support.
fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
    }
    let mut points: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut acc = 0.0f64;
    for win in points.windows(2) {
        while i < a.len() && a[i] <= win[0] {
            i += 1;
        }
        while j < b.len() && b[j] <= win[0] {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        acc += (fa - fb).abs() * (win[1] - win[0]);
    }
    acc
}

/// Per-item metric rows plus their mean and standard deviation.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub item_id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

impl MetricReport {
    pub fn mean_std(&self, field: impl Fn(&MetricRow) -> f64) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let mean = self.rows.iter().map(&field).sum::<f64>() / n;
        let var = self
            .rows
            .iter()
            .map(|r| {
                let d = field(r) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    /// CSV with one row per item and a final summary row of means and stds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item_id,psnr,ssim,mse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.item_id,
                fmt_db(r.psnr),
                r.ssim,
                r.mse
            ));
        }
        let (pm, ps) = self.mean_std(|r| r.psnr);
        let (sm, ss) = self.mean_std(|r| r.ssim);
        let (mm, ms) = self.mean_std(|r| r.mse);
        out.push_str(&format!(
            "mean+-std,{}+-{},{}+-{},{}+-{}\n",
            fmt_db(pm),
            fmt_db(ps),
            sm,
            ss,
            mm,
            ms
        ));
        out
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}
