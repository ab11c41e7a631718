use serde::{Deserialize, Serialize};

use super::check_features;
use crate::error::{Error, Result};

/// Maximum-likelihood local intrinsic dimensionality against a reference bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidDetector {
    bank: Vec<Vec<f64>>,
    k: usize,
}

impl LidDetector {
    pub fn new(bank: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        check_features(&bank)?;
        if k < 2 {
            return Err(Error::DegenerateEstimate(format!("k = {k}, at least 2 neighbours are needed")));
        }
        if bank.len() <= k {
            return Err(Error::contract(format!(
                "bank of {} vectors must be larger than k = {k}",
                bank.len()
            )));
        }
        Ok(Self { bank, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bank_size(&self) -> usize {
        self.bank.len()
    }

    /// `-(1/k sum_i log(r_i / r_k))^-1` over the `k` nearest non-zero bank distances.
    pub fn score(&self, feature: &[f64]) -> Result<f64> {
        let dim = self.bank[0].len();
        if feature.len() != dim {
            return Err(Error::contract(format!(
                "feature has dimension {}, bank has {dim}",
                feature.len()
            )));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("feature is not finite"));
        }
        let mut dists: Vec<f64> = self
            .bank
            .iter()
            .map(|b| b.iter().zip(feature).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .filter(|&d| d > 0.0)
            .collect();
        if dists.len() < self.k {
            return Err(Error::DegenerateEstimate(format!(
                "only {} non-zero neighbour distances for k = {}",
                dists.len(),
                self.k
            )));
        }
        dists.select_nth_unstable_by(self.k - 1, f64::total_cmp);
        let nearest = &mut dists[..self.k];
        nearest.sort_by(f64::total_cmp);
        let r_k = nearest[self.k - 1];
        let sum: f64 = nearest.iter().map(|r| (r / r_k).ln()).sum();
        if sum == 0.0 {
            return Err(Error::DegenerateEstimate(
                "all neighbour distances are equal".into(),
            ));
        }
        Ok(-(self.k as f64) / sum)
    }
}
