use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::classifier::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two interleaved half circles, scaled into the unit square.
    TwoMoons { samples: usize, noise: f64 },
    /// Isotropic Gaussian clusters in the unit square.
    GaussianBlobs { samples: usize, classes: usize, spread: f64 },
    /// 8x8 glyphs with random contrast, background, jitter and noise.
    SyntheticDigits { samples: usize, classes: usize, noise: f64 },
    /// Rows `label,p1,...,pd` with 8-bit pixels.
    Csv {
        path: PathBuf,
        classes: usize,
        height: usize,
        width: usize,
    },
    /// Records of one label byte followed by `height * width` pixel bytes, with a
    /// JSON header next to it at `<path>.hdr`.
    Raw { path: PathBuf },
}

/// Sidecar header of a raw byte grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub count: usize,
}

pub const DIGIT_SIDE: usize = 8;

const GLYPHS: [[&str; 8]; 10] = [
    ["..####..", ".#....#.", ".#...##.", ".#..#.#.", ".#.#..#.", ".##...#.", ".#....#.", "..####.."],
    ["...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######."],
    ["..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."],
    ["..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.", "..####.."],
    [".....#..", "....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#.."],
    [".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####.."],
    ["...###..", "..#.....", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    [".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#...."],
    ["..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    ["..####..", ".#....#.", ".#....#.", ".#....#.", "..#####.", "......#.", ".....#..", "..###..."],
];

/// Binary 8x8 template of digit `class` (0..=9).
pub fn digit_glyph(class: usize) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (r, row) in GLYPHS[class].iter().enumerate() {
        for (c, ch) in row.bytes().enumerate() {
            if ch == b'#' {
                out[r * DIGIT_SIDE + c] = 1.0;
            }
        }
    }
    out
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// `samples` digit images; labels cycle through the classes and the order is
/// then shuffled, so every class appears `samples / classes` times up to one.
pub fn synthetic_digits<R: Rng + ?Sized>(
    samples: usize,
    classes: usize,
    noise: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if !(2..=10).contains(&classes) {
        return Err(Error::Validation(format!("synthetic digits need 2..=10 classes, got {classes}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Validation("noise must be finite and >= 0".into()));
    }
    let mut labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    labels.shuffle(rng);
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut inputs = Vec::with_capacity(samples);
    for &y in &labels {
        let glyph = digit_glyph(y);
        let ink = rng.gen_range(0.55..=1.0);
        let paper = rng.gen_range(0.0..=0.25);
        let dr = rng.gen_range(-1isize..=1);
        let dc = rng.gen_range(-1isize..=1);
        let mut px = Vec::with_capacity(64);
        for r in 0..DIGIT_SIDE as isize {
            for c in 0..DIGIT_SIDE as isize {
                let (sr, sc) = (r - dr, c - dc);
                let on = if (0..8).contains(&sr) && (0..8).contains(&sc) {
                    glyph[(sr * 8 + sc) as usize]
                } else {
                    0.0
                };
                let n = if noise > 0.0 { gauss.sample(rng) } else { 0.0 };
                px.push(quantize(paper + (ink - paper) * on + n));
            }
        }
        inputs.push(Tensor::new(vec![DIGIT_SIDE, DIGIT_SIDE], px)?);
    }
    LabeledDataset::new(inputs, labels, classes, DIGIT_SIDE, DIGIT_SIDE)
}

/// Raw two-moons coordinates and labels.
pub fn two_moons_points<R: Rng + ?Sized>(samples: usize, noise: f64, rng: &mut R) -> Vec<([f64; 2], usize)> {
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    (0..samples)
        .map(|i| {
            let label = i % 2;
            let t = rng.gen_range(0.0..=std::f64::consts::PI);
            let (x, y) = if label == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let (nx, ny) = if noise > 0.0 {
                (gauss.sample(rng), gauss.sample(rng))
            } else {
                (0.0, 0.0)
            };
            ([x + nx, y + ny], label)
        })
        .collect()
}

fn points_dataset(points: Vec<([f64; 2], usize)>, classes: usize, lo: [f64; 2], span: [f64; 2]) -> Result<LabeledDataset> {
    let mut inputs = Vec::with_capacity(points.len());
    let mut labels = Vec::with_capacity(points.len());
    for (p, y) in points {
        let scaled = vec![
            ((p[0] - lo[0]) / span[0]).clamp(0.0, 1.0),
            ((p[1] - lo[1]) / span[1]).clamp(0.0, 1.0),
        ];
        inputs.push(Tensor::new(vec![1, 2], scaled)?);
        labels.push(y);
    }
    LabeledDataset::new(inputs, labels, classes, 1, 2)
}

pub fn two_moons<R: Rng + ?Sized>(samples: usize, noise: f64, rng: &mut R) -> Result<LabeledDataset> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Validation("noise must be finite and >= 0".into()));
    }
    points_dataset(two_moons_points(samples, noise, rng), 2, [-1.5, -1.0], [4.0, 2.5])
}

/// Blob centres are evenly spaced on a circle of radius 0.3 around the square's centre.
pub fn gaussian_blobs<R: Rng + ?Sized>(
    samples: usize,
    classes: usize,
    spread: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::Validation("gaussian blobs need at least 2 classes".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Validation("spread must be finite and >= 0".into()));
    }
    let gauss = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).expect("valid normal");
    let points = (0..samples)
        .map(|i| {
            let y = i % classes;
            let a = 2.0 * std::f64::consts::PI * y as f64 / classes as f64;
            let (nx, ny) = if spread > 0.0 {
                (gauss.sample(rng), gauss.sample(rng))
            } else {
                (0.0, 0.0)
            };
            ([0.5 + 0.3 * a.cos() + nx, 0.5 + 0.3 * a.sin() + ny], y)
        })
        .collect();
    points_dataset(points, classes, [0.0, 0.0], [1.0, 1.0])
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parse CSV rows `label,p1,...,pd` with pixels in `0..=255`. Blank lines are skipped.
pub fn parse_csv(text: &str, classes: usize, height: usize, width: usize) -> Result<LabeledDataset> {
    let dim = height * width;
    if dim == 0 || classes == 0 {
        return Err(Error::Validation("csv dataset needs positive height, width and classes".into()));
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let label: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("label {:?} is not a non-negative integer", fields[0])))?;
        if label >= classes {
            return Err(Error::Validation(format!(
                "line {line_no}: label {label} out of range for {classes} classes"
            )));
        }
        let mut px = Vec::with_capacity(dim);
        for f in &fields[1..] {
            let v: u8 = f
                .parse()
                .map_err(|_| parse_err(format!("pixel {f:?} is not an integer in 0..=255")))?;
            px.push(v as f64 / 255.0);
        }
        inputs.push(Tensor::new(vec![height, width], px)?);
        labels.push(label);
    }
    if inputs.is_empty() {
        return Err(Error::Validation("csv dataset has no rows".into()));
    }
    LabeledDataset::new(inputs, labels, classes, height, width)
}

pub fn raw_header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn parse_raw(bytes: &[u8], header: &RawHeader) -> Result<LabeledDataset> {
    let dim = header.height * header.width;
    if dim == 0 || header.classes == 0 || header.count == 0 {
        return Err(Error::Validation("raw header needs positive height, width, classes and count".into()));
    }
    let record = dim + 1;
    if bytes.len() != record * header.count {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "raw grid has {} bytes, header promises {} records of {record}",
                bytes.len(),
                header.count
            ),
        });
    }
    let mut inputs = Vec::with_capacity(header.count);
    let mut labels = Vec::with_capacity(header.count);
    for (i, rec) in bytes.chunks(record).enumerate() {
        let label = rec[0] as usize;
        if label >= header.classes {
            return Err(Error::Validation(format!(
                "record {i}: label {label} out of range for {} classes",
                header.classes
            )));
        }
        let px = rec[1..].iter().map(|&b| b as f64 / 255.0).collect();
        inputs.push(Tensor::new(vec![header.height, header.width], px)?);
        labels.push(label);
    }
    LabeledDataset::new(inputs, labels, header.classes, header.height, header.width)
}

/// Load or generate a dataset; builtin generators draw from a stream of `seed`.
pub fn ingest_dataset(spec: &DatasetSpec, seed_value: u64) -> Result<LabeledDataset> {
    let mut rng = seed::rng(seed_value);
    let data = match spec {
        DatasetSpec::TwoMoons { samples, noise } => two_moons(*samples, *noise, &mut rng)?,
        DatasetSpec::GaussianBlobs { samples, classes, spread } => gaussian_blobs(*samples, *classes, *spread, &mut rng)?,
        DatasetSpec::SyntheticDigits { samples, classes, noise } => synthetic_digits(*samples, *classes, *noise, &mut rng)?,
        DatasetSpec::Csv {
            path,
            classes,
            height,
            width,
        } => {
            let bytes = read(path)?;
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
                line: 1,
                message: format!("{}: not UTF-8: {e}", path.display()),
            })?;
            parse_csv(&text, *classes, *height, *width)?
        }
        DatasetSpec::Raw { path } => {
            let hdr_path = raw_header_path(path);
            let hdr_bytes = read(&hdr_path)?;
            let header: RawHeader = serde_json::from_slice(&hdr_bytes).map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("{}: {e}", hdr_path.display()),
            })?;
            parse_raw(&read(path)?, &header)?
        }
    };
    if data.is_empty() {
        return Err(Error::Validation("dataset is empty".into()));
    }
    data.validate()?;
    Ok(data)
}

/// Deterministic shuffled split into `(train, test)` with `test_size` test examples.
pub fn split<R: Rng + ?Sized>(data: &LabeledDataset, test_size: usize, rng: &mut R) -> Result<(LabeledDataset, LabeledDataset)> {
    if test_size == 0 || test_size >= data.len() {
        return Err(Error::Validation(format!(
            "test size {test_size} must be in 1..{}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (test, train) = order.split_at(test_size);
    Ok((data.subset(train), data.subset(test)))
}
