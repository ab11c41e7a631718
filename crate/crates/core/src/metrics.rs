//! Full-reference image similarity metrics and gray-level histograms.
//!
//! All metrics take images on a unit dynamic range (`[0, 1]`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const HISTOGRAM_BINS: usize = 256;

/// Clean image and its perturbed counterpart, both `height x width`, row-major.
#[derive(Clone, Copy, Debug)]
pub struct ImagePair<'a> {
    reference: &'a [f64],
    candidate: &'a [f64],
    height: usize,
    width: usize,
}

impl<'a> ImagePair<'a> {
    pub fn new(reference: &'a [f64], candidate: &'a [f64], height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if reference.len() != height * width || candidate.len() != height * width {
            return Err(Error::contract(format!(
                "image pair of {} and {} pixels does not match {height}x{width}",
                reference.len(),
                candidate.len()
            )));
        }
        for v in reference.iter().chain(candidate) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::contract(format!("pixel value {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            reference,
            candidate,
            height,
            width,
        })
    }

    pub fn reference(&self) -> &[f64] {
        self.reference
    }

    pub fn candidate(&self) -> &[f64] {
        self.candidate
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn swapped(&self) -> Self {
        Self {
            reference: self.candidate,
            candidate: self.reference,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim: f64,
    /// `+inf` for identical images (serialized as `null`).
    #[serde(with = "infinite_as_null")]
    pub psnr_db: f64,
    pub l2: f64,
    pub uqi: f64,
    pub scc: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Means of each metric over a set of pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub pairs: usize,
    pub mean: MetricReport,
}

impl MetricSummary {
    pub fn from_reports(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(Self {
            pairs: reports.len(),
            mean: MetricReport {
                ssim: avg(|r| r.ssim),
                psnr_db: avg(|r| r.psnr_db),
                l2: avg(|r| r.l2),
                uqi: avg(|r| r.uqi),
                scc: avg(|r| r.scc),
            },
        })
    }
}

pub fn evaluate(pair: &ImagePair<'_>) -> MetricReport {
    let (l2, uqi, scc) = aux_metrics(pair);
    MetricReport {
        ssim: ssim(pair),
        psnr_db: psnr(pair),
        l2,
        uqi,
        scc,
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

struct WindowStats {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn ssim_from(s: &WindowStats) -> f64 {
    let num = (2.0 * s.mean_x * s.mean_y + SSIM_C1) * (2.0 * s.cov + SSIM_C2);
    let den = (s.mean_x * s.mean_x + s.mean_y * s.mean_y + SSIM_C1) * (s.var_x + s.var_y + SSIM_C2);
    num / den
}

/// Weighted statistics over the pixels `(r0 + i, c0 + j)` for window offsets
/// `(i, j)`, with `weight(i, j)`.
fn window_stats(
    pair: &ImagePair<'_>,
    r0: usize,
    c0: usize,
    rows: usize,
    cols: usize,
    weight: impl Fn(usize, usize) -> f64,
) -> WindowStats {
    let w = pair.width;
    let (x, y) = (pair.reference, pair.candidate);
    let (mut mx, mut my) = (0.0, 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let k = (r0 + i) * w + c0 + j;
            let wt = weight(i, j);
            mx += wt * x[k];
            my += wt * y[k];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let k = (r0 + i) * w + c0 + j;
            let wt = weight(i, j);
            let dx = x[k] - mx;
            let dy = y[k] - my;
            vx += wt * dx * dx;
            vy += wt * dy * dy;
            cxy += wt * dx * dy;
        }
    }
    WindowStats {
        mean_x: mx,
        mean_y: my,
        var_x: vx,
        var_y: vy,
        cov: cxy,
    }
}

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows. Images smaller
/// than the window in either dimension use a single uniform window covering
/// the whole image.
pub fn ssim(pair: &ImagePair<'_>) -> f64 {
    let (h, w) = (pair.height, pair.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        let inv = 1.0 / (h * w) as f64;
        return ssim_from(&window_stats(pair, 0, 0, h, w, |_, _| inv));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let s = window_stats(pair, r0, c0, SSIM_WINDOW, SSIM_WINDOW, |i, j| taps[i] * taps[j]);
            total += ssim_from(&s);
            count += 1;
        }
    }
    total / count as f64
}

pub fn mse(pair: &ImagePair<'_>) -> f64 {
    pair.reference
        .iter()
        .zip(pair.candidate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pair.reference.len() as f64
}

/// `10 log10(1 / MSE)`; `+inf` when the images are identical.
pub fn psnr(pair: &ImagePair<'_>) -> f64 {
    let m = mse(pair);
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / m).log10()
    }
}

pub fn l2(pair: &ImagePair<'_>) -> f64 {
    pair.reference
        .iter()
        .zip(pair.candidate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn identical(pair: &ImagePair<'_>) -> bool {
    pair.reference == pair.candidate
}

/// Mean computed around the first element, exact for constant data.
fn mean(v: &[f64]) -> f64 {
    let v0 = v[0];
    v0 + v.iter().map(|x| x - v0).sum::<f64>() / v.len() as f64
}

/// Global universal quality index, written as the product of its correlation-
/// contrast and luminance factors. When both images are constant (either
/// denominator vanishes) the result is 1 for identical images and 0 otherwise.
pub fn uqi(pair: &ImagePair<'_>) -> f64 {
    let (x, y) = (pair.reference, pair.candidate);
    let (mx, my) = (mean(x), mean(y));
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    let contrast_den = vx + vy;
    let luminance_den = mx * mx + my * my;
    if contrast_den == 0.0 || luminance_den == 0.0 {
        return if identical(pair) { 1.0 } else { 0.0 };
    }
    (2.0 * cxy / contrast_den) * (2.0 * mx * my / luminance_den)
}

/// 3x3 Laplacian high-pass (`8` centre, `-1` neighbours) with edge replication.
pub fn laplacian(image: &[f64], height: usize, width: usize) -> Vec<f64> {
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, height as isize - 1) as usize;
        let c = c.clamp(0, width as isize - 1) as usize;
        image[r * width + c]
    };
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height as isize {
        for c in 0..width as isize {
            let centre = at(r, c);
            let mut acc = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    if dr != 0 || dc != 0 {
                        acc += centre - at(r + dr, c + dc);
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Pearson correlation of the two images' Laplacian responses. If either
/// response has zero variance the result is 1 for identical images, else 0.
pub fn scc(pair: &ImagePair<'_>) -> f64 {
    let fx = laplacian(pair.reference, pair.height, pair.width);
    let fy = laplacian(pair.candidate, pair.height, pair.width);
    let (mx, my) = (mean(&fx), mean(&fy));
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in fx.iter().zip(&fy) {
        let (dx, dy) = (a - mx, b - my);
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    let den = vx * vy;
    if den == 0.0 {
        return if identical(pair) { 1.0 } else { 0.0 };
    }
    cxy / den.sqrt()
}

/// `(l2, uqi, scc)`.
pub fn aux_metrics(pair: &ImagePair<'_>) -> (f64, f64, f64) {
    (l2(pair), uqi(pair), scc(pair))
}

/// Counts of 8-bit gray levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayHistogram {
    pub bins: Vec<u64>,
}

impl GrayHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// Bin index `floor(min(256 p, 255))` for every pixel.
pub fn gray_histogram(image: &[f64]) -> Result<GrayHistogram> {
    let mut bins = vec![0u64; HISTOGRAM_BINS];
    for &p in image {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("pixel value {p} outside [0, 1]")));
        }
        let idx = (p * HISTOGRAM_BINS as f64).min((HISTOGRAM_BINS - 1) as f64).floor() as usize;
        bins[idx] += 1;
    }
    Ok(GrayHistogram { bins })
}

/// Metrics with arguments in the opposite order, for symmetry checks.
pub fn evaluate_swapped(pair: &ImagePair<'_>) -> MetricReport {
    evaluate(&pair.swapped())
}
