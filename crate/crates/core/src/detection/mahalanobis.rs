use nalgebra::{DMatrix, DVector};

use super::check_features;
use crate::error::{Error, Result};

/// Class-conditional Gaussians with a shared, ridge-regularized covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct MahalanobisDetector {
    class_means: Vec<Vec<f64>>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    lambda: f64,
}

impl MahalanobisDetector {
    /// Fit per-class means and the pooled covariance `S + lambda I`, where `S` is
    /// the average outer product of class-centered features.
    pub fn fit(features: &[Vec<f64>], labels: &[usize], lambda: f64) -> Result<Self> {
        let dim = check_features(features)?;
        if labels.len() != features.len() {
            return Err(Error::contract("one label per feature vector required"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::contract("lambda must be finite and >= 0"));
        }
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (f, &y) in features.iter().zip(labels) {
            counts[y] += 1;
            for (s, v) in sums[y].iter_mut().zip(f) {
                *s += v;
            }
        }
        if let Some(c) = counts.iter().position(|&n| n < 2) {
            return Err(Error::contract(format!(
                "class {c} has {} samples, at least 2 are required",
                counts[c]
            )));
        }
        let means: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for (f, &y) in features.iter().zip(labels) {
            let d = DVector::from_iterator(dim, f.iter().zip(&means[y]).map(|(a, m)| a - m));
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= features.len() as f64;
        for i in 0..dim {
            cov[(i, i)] += lambda;
        }
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::Factorization(format!(
                "shared covariance (lambda = {lambda}) is not positive definite"
            ))
        })?;
        let precision = chol.inverse();
        Ok(Self {
            class_means: means,
            covariance: cov,
            precision,
            lambda,
        })
    }

    /// Detector from explicit means and precision matrix.
    pub fn from_parts(class_means: Vec<Vec<f64>>, precision: DMatrix<f64>) -> Result<Self> {
        let dim = check_features(&class_means)?;
        if precision.nrows() != dim || precision.ncols() != dim {
            return Err(Error::contract("precision matrix does not match the mean dimension"));
        }
        let covariance = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("precision is not positive definite".into()))?
            .inverse();
        Ok(Self {
            class_means,
            covariance,
            precision,
            lambda: 0.0,
        })
    }

    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    /// Smallest squared Mahalanobis distance to any class mean.
    pub fn score(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.dim() {
            return Err(Error::contract(format!(
                "feature has dimension {}, detector expects {}",
                feature.len(),
                self.dim()
            )));
        }
        let mut best = f64::INFINITY;
        for mean in &self.class_means {
            let d = DVector::from_iterator(self.dim(), feature.iter().zip(mean).map(|(f, m)| f - m));
            let q = d.dot(&(&self.precision * &d));
            best = best.min(q.max(0.0));
        }
        Ok(best)
    }
}
