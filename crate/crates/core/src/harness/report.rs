use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::suite::{ExampleRecord, RunReport};
use crate::error::{Error, Result};
use crate::metrics::gray_histogram;

/// Binary 8-bit PGM with pixel bytes `round(value * 255)`.
pub fn pgm_bytes(pixels: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if pixels.len() != height * width || pixels.is_empty() {
        return Err(Error::contract(format!(
            "{} pixels do not form a {height}x{width} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for &p in pixels {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("pixel value {p} outside [0, 1]")));
        }
        out.push((p * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, pixels: &[f64], height: usize, width: usize) -> Result<()> {
    std::fs::write(path, pgm_bytes(pixels, height, width)?).map_err(|e| Error::io(path, e))
}

/// Parse a binary PGM with maxval 255 into `(pixels / 255, height, width)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let bad = |message: &str| Error::Parse {
        line: 1,
        message: message.into(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("PGM header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let body = &bytes[pos + 1..];
    if body.len() != width * height {
        return Err(bad("PGM pixel data has the wrong length"));
    }
    Ok((body.iter().map(|&b| b as f64 / 255.0).collect(), height, width))
}

pub fn read_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    parse_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn asr_csv(report: &RunReport) -> String {
    let mut s = String::from("method,epsilon,attempted,successes,asr\n");
    for c in &report.asr_grid {
        let _ = writeln!(s, "{},{},{},{},{}", c.method, c.epsilon, c.attempted, c.successes, c.asr);
    }
    s
}

pub fn metrics_csv(report: &RunReport) -> String {
    let mut s = String::from("method,epsilon,pairs,ssim,psnr_db,l2,uqi,scc\n");
    for c in &report.metrics {
        match &c.summary {
            Some(m) => {
                let r = &m.mean;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    c.method, c.epsilon, m.pairs, r.ssim, r.psnr_db, r.l2, r.uqi, r.scc
                );
            }
            None => {
                let _ = writeln!(s, "{},{},0,,,,,", c.method, c.epsilon);
            }
        }
    }
    s
}

pub fn detection_csv(report: &RunReport) -> String {
    let mut s = String::from("detector,method,epsilon,clean,adversarial,auroc,best_threshold_accuracy\n");
    for c in &report.detection {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.detector,
            c.method,
            c.epsilon,
            c.clean,
            c.adversarial,
            opt(c.auroc),
            opt(c.best_threshold_accuracy)
        );
    }
    s
}

/// Up to `saved_examples` successful records per (method, budget), in grid order.
pub fn saved_records(report: &RunReport) -> Vec<&ExampleRecord> {
    let cap = report.config.saved_examples;
    let mut out = Vec::new();
    for cell in &report.asr_grid {
        out.extend(
            report
                .records(cell.method, cell.epsilon)
                .filter(|r| r.success && !r.adversarial.is_empty())
                .take(cap),
        );
    }
    out
}

pub fn pgm_name(record: &ExampleRecord) -> String {
    format!("{}_eps{}_{:04}.pgm", record.method, record.epsilon, record.index)
}

/// Write `report.json`, the CSV tables, PGM images and gray histograms into `dir`.
/// Returns the paths written.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("report.json", report.to_json())?;
    put("asr_grid.csv", asr_csv(report))?;
    put("metrics.csv", metrics_csv(report))?;
    put("detection.csv", detection_csv(report))?;

    let (h, w) = (report.dataset.height, report.dataset.width);
    let saved = saved_records(report);
    let mut hist = String::from("method,epsilon,index,bin,clean,adversarial\n");
    let mut clean_written = BTreeSet::new();
    let mut images_written = Vec::new();
    for r in &saved {
        if clean_written.insert(r.index) {
            let path = images.join(format!("clean_{:04}.pgm", r.index));
            write_pgm(&path, &r.clean, h, w)?;
            images_written.push(path);
        }
        let path = images.join(pgm_name(r));
        write_pgm(&path, &r.adversarial, h, w)?;
        images_written.push(path);
        let clean = gray_histogram(&r.clean)?;
        let adv = gray_histogram(&r.adversarial)?;
        for (bin, (c, a)) in clean.bins.iter().zip(&adv.bins).enumerate() {
            let _ = writeln!(hist, "{},{},{},{bin},{c},{a}", r.method, r.epsilon, r.index);
        }
    }
    put("histogram.csv", hist)?;
    written.extend(images_written);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_pgm() {
        let bytes = pgm_bytes(&[0.0; 6], 2, 3).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0u8; 6]);
        let (px, h, w) = parse_pgm(&bytes).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(px, vec![0.0; 6]);
    }

    #[test]
    fn pgm_rounds() {
        let bytes = pgm_bytes(&[1.0, 0.5, 0.0021], 1, 3).unwrap();
        assert_eq!(&bytes[11..], &[255, 128, 1]);
        assert!(pgm_bytes(&[1.5], 1, 1).is_err());
        assert!(parse_pgm(&bytes[..12]).is_err());
    }
}
