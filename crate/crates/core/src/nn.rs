//! Dense layers and parameter binding shared by the flow conditioners and the classifier.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

/// Affine map `x W + b` with `W: [inputs, outputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self::uniform(inputs, outputs, limit, rng)
    }

    /// Weights and biases uniform in `[-limit, limit]`.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, limit: f64, rng: &mut R) -> Self {
        let w = (0..inputs * outputs)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let b = if limit > 0.0 {
            (0..outputs).map(|_| rng.gen_range(-limit..=limit)).collect()
        } else {
            vec![0.0; outputs]
        };
        Self {
            weight: Tensor::from_parts(vec![inputs, outputs], w),
            bias: Tensor::from_parts(vec![outputs], b),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(tape: &mut Tape<'_>, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = tape.matmul(x, weight)?;
        tape.broadcast_add(h, bias)
    }
}

/// Push parameters onto a tape, either as gradient-tracked variables or as constants.
pub fn bind<'a>(tape: &mut Tape<'a>, params: &[&'a Tensor], track: bool) -> Vec<Var> {
    params
        .iter()
        .map(|&p| {
            if track {
                tape.variable(p.clone())
            } else {
                tape.constant_ref(p)
            }
        })
        .collect()
}
