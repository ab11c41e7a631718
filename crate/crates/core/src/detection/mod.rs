//! Feature-space detectors for adversarial inputs and their ROC summaries.

mod lid;
mod mahalanobis;
mod roc;

pub use lid::LidDetector;
pub use mahalanobis::MahalanobisDetector;
pub use roc::{auroc, roc_evaluate, RocSummary};

use crate::error::{Error, Result};

fn check_features(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::contract("no feature vectors given"))?;
    if dim == 0 {
        return Err(Error::contract("feature vectors must be nonempty"));
    }
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::contract(format!(
                "feature {i} has dimension {}, expected {dim}",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("feature {i} is not finite")));
        }
    }
    Ok(dim)
}
