//! Seam coherence metrics and the ablation runners.

mod ablation;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::PixelImage;
use crate::scalar::Scalar;

pub use ablation::{ablate_size, ablate_stride, write_csv, AblationRecord, AblationTemplate, Extent, Method};

/// Default seam band half-width in pixels.
pub const DEFAULT_SEAM_HALF_WIDTH: usize = 8;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Two horizontally adjacent, non-overlapping crops.
#[derive(Debug, Clone, PartialEq)]
pub struct CropPair {
    pub left: PixelImage,
    pub right: PixelImage,
    /// Column of the first pixel of `right` in panorama coordinates.
    pub seam_x: usize,
}

/// Tiles the top `crop_side` rows from the left edge into square crops and
/// pairs neighbours. A right margin narrower than `crop_side` is dropped.
pub fn extract_adjacent_crops(panorama: &PixelImage, crop_side: usize) -> Result<Vec<CropPair>> {
    if crop_side == 0 {
        return Err(Error::Shape("crop side must be positive".into()));
    }
    if panorama.height() < crop_side || panorama.width() < 2 * crop_side {
        return Err(Error::Shape(format!(
            "{}x{} panorama holds fewer than two {crop_side}px crops",
            panorama.height(),
            panorama.width()
        )));
    }
    let tiles = panorama.width() / crop_side;
    let crops =
        (0..tiles).map(|i| panorama.crop(0, i * crop_side, crop_side, crop_side)).collect::<Result<Vec<_>>>()?;
    Ok(crops
        .windows(2)
        .enumerate()
        .map(|(i, w)| CropPair { left: w[0].clone(), right: w[1].clone(), seam_x: (i + 1) * crop_side })
        .collect())
}

/// Mean anisotropic total variation over the band `[seam_x - w, seam_x + w)`
/// spanning the full image height.
///
/// Each pixel contributes `|I(y, x+1) - I(y, x)| + |I(y+1, x) - I(y, x)|`,
/// averaged over channels with samples scaled to `[0, 1]`. Differences whose
/// forward neighbour falls outside the band count as zero.
pub fn tv_seam<T: Scalar>(panorama: &PixelImage, seam_x: usize, half_width: usize) -> Result<T> {
    if half_width == 0 {
        return Err(Error::Shape("seam half-width must be at least 1".into()));
    }
    if seam_x < half_width || seam_x + half_width > panorama.width() || panorama.height() == 0 {
        return Err(Error::Shape(format!(
            "seam band [{}, {}) lies outside the {}px wide image",
            seam_x as isize - half_width as isize,
            seam_x + half_width,
            panorama.width()
        )));
    }
    let (x0, x1) = (seam_x - half_width, seam_x + half_width);
    let h = panorama.height();
    // integer sum keeps the result independent of traversal order
    let mut total = 0u64;
    for y in 0..h {
        for x in x0..x1 {
            for ch in 0..PixelImage::CHANNELS {
                let v = i32::from(panorama.sample(y, x, ch));
                if x + 1 < x1 {
                    total += u64::from((i32::from(panorama.sample(y, x + 1, ch)) - v).unsigned_abs());
                }
                if y + 1 < h {
                    total += u64::from((i32::from(panorama.sample(y + 1, x, ch)) - v).unsigned_abs());
                }
            }
        }
    }
    let norm = 255.0 * PixelImage::CHANNELS as f64 * (h * (x1 - x0)) as f64;
    Ok(T::of(total as f64) / T::of(norm))
}

fn gaussian_taps(len: usize) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..len).map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Valid-mode separable filtering of a `h x w` plane.
fn filter_valid<T: Scalar>(plane: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut across = vec![T::zero(); h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            across[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(&t, &v)| t * v).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, &t)| t * across[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) evaluated at
/// every fully contained window position, averaged over positions and then
/// channels. Images smaller than the window use a square window as large as
/// the shorter side.
pub fn ssim<T: Scalar>(a: &PixelImage, b: &PixelImage) -> Result<T> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "ssim needs equal sizes, got {}x{} and {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let (h, w) = (a.height(), a.width());
    if h == 0 || w == 0 {
        return Err(Error::Shape("ssim of an empty image".into()));
    }
    let k = SSIM_WINDOW.min(h).min(w);
    let taps: Vec<T> = gaussian_taps(k).into_iter().map(T::of).collect();
    let (c1, c2) = (T::of(SSIM_C1), T::of(SSIM_C2));
    let two = T::of(2.0);
    let mut acc = T::zero();
    for ch in 0..PixelImage::CHANNELS {
        let x: Vec<T> = a.samples().iter().skip(ch).step_by(3).map(|&v| T::of(f64::from(v))).collect();
        let y: Vec<T> = b.samples().iter().skip(ch).step_by(3).map(|&v| T::of(f64::from(v))).collect();
        let xx: Vec<T> = x.iter().map(|&v| v * v).collect();
        let yy: Vec<T> = y.iter().map(|&v| v * v).collect();
        let xy: Vec<T> = x.iter().zip(&y).map(|(&p, &q)| p * q).collect();
        let mx = filter_valid(&x, h, w, &taps);
        let my = filter_valid(&y, h, w, &taps);
        let sxx = filter_valid(&xx, h, w, &taps);
        let syy = filter_valid(&yy, h, w, &taps);
        let sxy = filter_valid(&xy, h, w, &taps);
        let mut sum = T::zero();
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((two * ux * uy + c1) * (two * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        acc += sum / T::of(mx.len() as f64);
    }
    Ok(acc / T::of(PixelImage::CHANNELS as f64))
}

/// Metric tuple of one method or configuration. Neural metrics are optional
/// slots that join the composite only when every compared method has them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub name: String,
    pub tv: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
    pub dists: Option<f64>,
}

impl MethodMetrics {
    pub fn new(name: impl Into<String>, tv: f64, ssim: f64) -> Self {
        MethodMetrics { name: name.into(), tv, ssim, lpips: None, dists: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct CohWeights {
    pub tv: f64,
    pub ssim: f64,
    pub lpips: f64,
    pub dists: f64,
}

impl Default for CohWeights {
    fn default() -> Self {
        CohWeights { tv: 1.0, ssim: 1.0, lpips: 1.0, dists: 1.0 }
    }
}

/// Composite coherence score per method, lower is better.
///
/// SSIM enters as `1 - SSIM`; every metric is min-max normalized across the
/// methods and the normalized values are combined by a weighted mean. A metric
/// with equal values everywhere normalizes to zero.
pub fn coh(methods: &[MethodMetrics], weights: &CohWeights) -> Result<Vec<f64>> {
    if methods.len() < 2 {
        return Err(Error::Normalization(format!("coherence score needs at least two methods, got {}", methods.len())));
    }
    let mut columns: Vec<(f64, Vec<f64>, &str)> = vec![
        (weights.tv, methods.iter().map(|m| m.tv).collect(), "tv"),
        (weights.ssim, methods.iter().map(|m| 1.0 - m.ssim).collect(), "ssim"),
    ];
    if methods.iter().all(|m| m.lpips.is_some()) {
        columns.push((weights.lpips, methods.iter().map(|m| m.lpips.unwrap()).collect(), "lpips"));
    }
    if methods.iter().all(|m| m.dists.is_some()) {
        columns.push((weights.dists, methods.iter().map(|m| m.dists.unwrap()).collect(), "dists"));
    }
    let total: f64 = columns.iter().map(|c| c.0).sum();
    if columns.iter().any(|c| c.0 < 0.0 || !c.0.is_finite()) || total <= 0.0 {
        return Err(Error::Normalization("coherence weights must be non-negative with a positive sum".into()));
    }
    let mut out = vec![0.0; methods.len()];
    for (weight, values, name) in &columns {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Normalization(format!("non-finite {name} value")));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            log::warn!("{name} is identical across all methods; normalized to 0");
            continue;
        }
        for (o, v) in out.iter_mut().zip(values) {
            *o += weight * (v - lo) / (hi - lo);
        }
    }
    Ok(out.into_iter().map(|v| v / total).collect())
}

/// Per-seam and per-pair measurements of one panorama.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub seams: Vec<usize>,
    pub tv: Vec<f64>,
    pub ssim: Vec<f64>,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub coh: Option<f64>,
    pub wall_ms: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seam TV and pair SSIM at every seam between adjacent `crop_side` crops.
pub fn evaluate_panorama<T: Scalar>(
    panorama: &PixelImage,
    crop_side: usize,
    half_width: usize,
) -> Result<MetricReport> {
    let pairs = extract_adjacent_crops(panorama, crop_side)?;
    let strip = panorama.crop(0, 0, crop_side, panorama.width())?;
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| Ok((tv_seam::<T>(&strip, p.seam_x, half_width)?.as_f64(), ssim::<T>(&p.left, &p.right)?.as_f64())))
        .collect::<Result<_>>()?;
    let tv: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ss: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (tv_mean, tv_std) = mean_std(&tv);
    let (ssim_mean, ssim_std) = mean_std(&ss);
    Ok(MetricReport {
        seams: pairs.iter().map(|p| p.seam_x).collect(),
        tv,
        ssim: ss,
        tv_mean,
        tv_std,
        ssim_mean,
        ssim_std,
        coh: None,
        wall_ms: None,
    })
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test(wins: usize, trials: usize) -> f64 {
    if wins > trials {
        return 0.0;
    }
    // log-space binomial tail, exact enough for the trial counts used here
    let ln_half = 0.5f64.ln();
    let mut ln_choose = 0.0f64;
    let mut terms = Vec::with_capacity(trials + 1);
    for k in 0..=trials {
        if k > 0 {
            ln_choose += ((trials - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            terms.push(ln_choose + trials as f64 * ln_half);
        }
    }
    terms.iter().map(|t| t.exp()).sum::<f64>().min(1.0)
}
