use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auroc: f64,
    /// Best balanced accuracy over thresholds of the form `score >= t`.
    pub best_threshold_accuracy: f64,
}

fn check(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::contract(format!("{what} scores are empty")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::contract(format!("{what} scores contain NaN")));
    }
    Ok(())
}

/// Probability that an adversarial score exceeds a clean one, ties counted half.
pub fn auroc(clean: &[f64], adversarial: &[f64]) -> Result<f64> {
    check(clean, "clean")?;
    check(adversarial, "adversarial")?;
    let mut sorted = clean.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Twice the Mann-Whitney U statistic, kept integral.
    let mut twice_u: u128 = 0;
    for &a in adversarial {
        let below = sorted.partition_point(|&c| c < a);
        let not_above = sorted.partition_point(|&c| c <= a);
        twice_u += (2 * below + (not_above - below)) as u128;
    }
    let twice_n = 2 * clean.len() as u128 * adversarial.len() as u128;
    Ok(twice_u as f64 / twice_n as f64)
}

fn best_balanced_accuracy(clean: &[f64], adversarial: &[f64]) -> f64 {
    let mut c = clean.to_vec();
    let mut a = adversarial.to_vec();
    c.sort_by(f64::total_cmp);
    a.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = c.iter().chain(&a).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let (nc, na) = (c.len() as f64, a.len() as f64);
    // Threshold above every score: nothing flagged.
    let mut best = 0.5;
    for t in thresholds {
        let tnr = c.partition_point(|&s| s < t) as f64 / nc;
        let tpr = (a.len() - a.partition_point(|&s| s < t)) as f64 / na;
        best = f64::max(best, 0.5 * (tpr + tnr));
    }
    best
}

/// AUROC and best balanced detection accuracy, treating larger scores as more anomalous.
pub fn roc_evaluate(clean: &[f64], adversarial: &[f64]) -> Result<RocSummary> {
    Ok(RocSummary {
        auroc: auroc(clean, adversarial)?,
        best_threshold_accuracy: best_balanced_accuracy(clean, adversarial),
    })
}
