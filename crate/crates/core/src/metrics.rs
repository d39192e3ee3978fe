//! NMSE, PSNR and SSIM on magnitude images, and per-split reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::phantom::Sample;

/// PSNR reported for a perfect match.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

fn check_pair(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::invalid(format!(
            "metric inputs differ in length ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// `‖pred − gt‖² / ‖gt‖²`.
pub fn nmse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let den: f64 = gt.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::UndefinedReference("NMSE against an all-zero reference".into()));
    }
    let num: f64 = pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

pub fn mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / gt.len() as f64)
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(pred: &[f64], gt: &[f64], peak: f64) -> Result<f64> {
    let m = mse(pred, gt)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window(k: usize) -> Vec<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..k)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid windows of an 11×11 Gaussian (σ = 1.5). Images
/// smaller than the window use a single window truncated to the image.
pub fn ssim(pred: &[f64], gt: &[f64], height: usize, width: usize) -> Result<f64> {
    check_pair(pred, gt)?;
    if pred.len() != height * width {
        return Err(Error::invalid("SSIM input length does not match dims"));
    }
    let kh = SSIM_WINDOW.min(height);
    let kw = SSIM_WINDOW.min(width);
    let (gh, gw) = (gaussian_window(kh), gaussian_window(kw));
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let (oh, ow) = (height - kh + 1, width - kw + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (a, wa) in gh.iter().enumerate() {
                for (b, wb) in gw.iter().enumerate() {
                    let wt = wa * wb;
                    let p = (i + a) * width + j + b;
                    let (x, y) = (pred[p], gt[p]);
                    mx += wt * x;
                    my += wt * y;
                    sxx += wt * x * x;
                    syy += wt * y * y;
                    sxy += wt * x * y;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub image_id: String,
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: MetricSummary,
    /// Population standard deviation.
    pub std: MetricSummary,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("metric report needs at least one row"));
        }
        let n = rows.len() as f64;
        let mean_of = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mean = MetricSummary {
            nmse: mean_of(|r| r.nmse),
            psnr: mean_of(|r| r.psnr),
            ssim: mean_of(|r| r.ssim),
        };
        let std_of = |f: fn(&MetricRow) -> f64, m: f64| {
            (rows.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        let std = MetricSummary {
            nmse: std_of(|r| r.nmse, mean.nmse),
            psnr: std_of(|r| r.psnr, mean.psnr),
            ssim: std_of(|r| r.ssim, mean.ssim),
        };
        Ok(Self { rows, mean, std })
    }

    /// `image_id,nmse,psnr,ssim` with trailing `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,nmse,psnr,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.image_id, r.nmse, r.psnr, r.ssim);
        }
        let _ = writeln!(s, "mean,{},{},{}", self.mean.nmse, self.mean.psnr, self.mean.ssim);
        let _ = writeln!(s, "std,{},{},{}", self.std.nmse, self.std.psnr, self.std.ssim);
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Scores one reconstruction against its reference (both magnitude images).
pub fn score(image_id: &str, pred: &[f64], gt: &[f64], height: usize, width: usize) -> Result<MetricRow> {
    Ok(MetricRow {
        image_id: image_id.to_string(),
        nmse: nmse(pred, gt)?,
        psnr: psnr(pred, gt, 1.0)?,
        ssim: ssim(pred, gt, height, width)?,
    })
}

/// Scores `recon` on every sample, in order, against `|truth|`.
pub fn evaluate<F>(samples: &[Sample], mut recon: F) -> Result<MetricReport>
where
    F: FnMut(&Sample) -> Result<ComplexImage<f64>>,
{
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let out = recon(s)?;
        if out.dims() != s.dims() {
            return Err(Error::invalid(format!("reconstruction of {} has the wrong shape", s.id)));
        }
        let (h, w) = s.dims();
        rows.push(score(&s.id, &out.magnitude(), &s.truth.magnitude(), h, w)?);
    }
    MetricReport::from_rows(rows)
}
