use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ops::sigmoid, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Dequantization followed by a squashed logit:
/// `y = logit(alpha + (1 - 2 alpha) (x + u / levels))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub levels: u32,
    pub alpha: f64,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            levels: 256,
            alpha: 0.05,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::contract(format!("invalid preprocessing spec {self:?}")));
        }
        Ok(())
    }

    fn check_pixels(pixels: &[f64]) -> Result<()> {
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(())
    }

    /// Forward map with explicit dequantization offsets `u` in `[0, 1)`.
    pub fn forward_with_offsets(&self, pixels: &[f64], offsets: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        Self::check_pixels(pixels)?;
        if offsets.len() != pixels.len() {
            return Err(Error::contract("dequantization offsets must match pixel count"));
        }
        let span = 1.0 - 2.0 * self.alpha;
        let levels = f64::from(self.levels);
        Ok(pixels
            .iter()
            .zip(offsets)
            .map(|(&x, &u)| logit(self.alpha + span * (x + u / levels)))
            .collect())
    }

    /// Forward map with uniform dequantization noise.
    pub fn preprocess<R: Rng + ?Sized>(&self, pixels: &Tensor, rng: &mut R) -> Result<Tensor> {
        let offsets: Vec<f64> = (0..pixels.len()).map(|_| rng.gen::<f64>()).collect();
        let data = self.forward_with_offsets(pixels.data(), &offsets)?;
        Tensor::new(pixels.shape().to_vec(), data)
    }

    /// Forward map without noise (`u = 0`); `postprocess` inverts it exactly up to rounding.
    pub fn preprocess_deterministic(&self, pixels: &Tensor) -> Result<Tensor> {
        let data = self.forward_with_offsets(pixels.data(), &vec![0.0; pixels.len()])?;
        Tensor::new(pixels.shape().to_vec(), data)
    }

    /// Inverse of the deterministic part, clamped to `[0, 1]`.
    pub fn postprocess(&self, values: &Tensor) -> Tensor {
        let inv_span = 1.0 / (1.0 - 2.0 * self.alpha);
        let data = values
            .data()
            .iter()
            .map(|&y| ((sigmoid(y) - self.alpha) * inv_span).clamp(0.0, 1.0))
            .collect();
        Tensor::new(values.shape().to_vec(), data).expect("shape preserved")
    }

    /// Differentiable `postprocess`; the final clamp passes gradients inside `[0, 1]`.
    pub fn postprocess_on_tape(&self, tape: &mut Tape<'_>, y: Var) -> Result<Var> {
        let inv_span = 1.0 / (1.0 - 2.0 * self.alpha);
        let p = tape.sigmoid(y)?;
        let shift = tape.constant(Tensor::full(tape.value(p).shape(), -self.alpha));
        let p = tape.add(p, shift)?;
        let p = tape.scale(p, inv_span)?;
        tape.clamp(p, 0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn midpoint_maps_to_zero() {
        let spec = PreprocessSpec::default();
        let y = spec.forward_with_offsets(&[0.5], &[0.0]).unwrap();
        assert!(y[0].abs() < 1e-15);
    }

    #[test]
    fn range_endpoints() {
        let spec = PreprocessSpec::default();
        let lo = spec.forward_with_offsets(&[0.0], &[0.0]).unwrap()[0];
        let expected = (0.05f64 / 0.95).ln();
        assert!((lo - expected).abs() < 1e-12);
        assert!((lo + 2.9444).abs() < 1e-4);
        let hi = spec.forward_with_offsets(&[1.0], &[0.0]).unwrap()[0];
        assert!((hi - 2.9444).abs() < 1e-4);
    }

    #[test]
    fn round_trip_within_quantization_bound() {
        let spec = PreprocessSpec::default();
        let mut rng = seed::rng(11);
        for _ in 0..50 {
            let x = Tensor::vector((0..64).map(|_| rng.gen::<f64>()).collect());
            let y = spec.preprocess(&x, &mut rng).unwrap();
            let back = spec.postprocess(&y);
            assert!(x.max_abs_diff(&back) <= 1.0 / 256.0);
            let exact = spec.postprocess(&spec.preprocess_deterministic(&x).unwrap());
            assert!(x.max_abs_diff(&exact) < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let spec = PreprocessSpec::default();
        assert!(spec.forward_with_offsets(&[1.2], &[0.0]).is_err());
        assert!(spec.forward_with_offsets(&[-0.1], &[0.0]).is_err());
    }

    #[test]
    fn tape_postprocess_matches_plain() {
        let spec = PreprocessSpec::default();
        let y = Tensor::vector(vec![-3.5, -1.0, 0.0, 0.7, 2.9, 4.0]);
        let mut tape = Tape::new();
        let v = tape.variable(y.clone());
        let p = spec.postprocess_on_tape(&mut tape, v).unwrap();
        assert_eq!(tape.value(p), &spec.postprocess(&y));
    }
}
