use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Dense;

/// Bound on the per-coordinate log-scale: `s = SCALE_BOUND * tanh(raw)`.
pub const SCALE_BOUND: f64 = 2.0;

/// Number of parameter tensors per layer.
pub const PARAMS_PER_LAYER: usize = 8;

/// Affine coupling step.
///
/// Coordinates with `mask == 1` pass through unchanged and condition the scale
/// and shift applied to the others. Generative direction: `x = z * exp(s) + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    mask: Tensor,
    complement: Tensor,
    hidden: [Dense; 2],
    scale_head: Dense,
    shift_head: Dense,
}

/// Alternating even/odd mask for layer `index`.
pub fn alternating_mask(dim: usize, index: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if (i + index).is_multiple_of(2) { 1.0 } else { 0.0 })
        .collect()
}

impl CouplingLayer {
    /// Conditioner with Glorot hidden layers and zero output heads, so the layer
    /// starts as the identity map.
    pub fn identity<R: Rng + ?Sized>(dim: usize, hidden: usize, mask: Vec<f64>, rng: &mut R) -> Result<Self> {
        Self::new(
            mask,
            [Dense::glorot(dim, hidden, rng), Dense::glorot(hidden, hidden, rng)],
            Dense::zeros(hidden, dim),
            Dense::zeros(hidden, dim),
        )
    }

    /// Every weight uniform in `[-limit, limit]`, heads included.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        hidden: usize,
        mask: Vec<f64>,
        limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(
            mask,
            [
                Dense::glorot(dim, hidden, rng),
                Dense::glorot(hidden, hidden, rng),
            ],
            Dense::uniform(hidden, dim, limit, rng),
            Dense::uniform(hidden, dim, limit, rng),
        )
    }

    pub fn new(mask: Vec<f64>, hidden: [Dense; 2], scale_head: Dense, shift_head: Dense) -> Result<Self> {
        let dim = mask.len();
        if dim == 0 || mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::contract("coupling mask must be a nonempty 0/1 vector"));
        }
        let width = hidden[0].outputs();
        let shapes_ok = hidden[0].inputs() == dim
            && hidden[1].inputs() == width
            && scale_head.inputs() == hidden[1].outputs()
            && shift_head.inputs() == hidden[1].outputs()
            && scale_head.outputs() == dim
            && shift_head.outputs() == dim;
        if !shapes_ok {
            return Err(Error::contract("coupling conditioner shapes do not match the mask"));
        }
        let complement = mask.iter().map(|m| 1.0 - m).collect();
        Ok(Self {
            mask: Tensor::vector(mask),
            complement: Tensor::vector(complement),
            hidden,
            scale_head,
            shift_head,
        })
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[f64] {
        self.mask.data()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden[0].outputs()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let [h0, h1] = &self.hidden;
        vec![
            &h0.weight,
            &h0.bias,
            &h1.weight,
            &h1.bias,
            &self.scale_head.weight,
            &self.scale_head.bias,
            &self.shift_head.weight,
            &self.shift_head.bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let [h0, h1] = &mut self.hidden;
        vec![
            &mut h0.weight,
            &mut h0.bias,
            &mut h1.weight,
            &mut h1.bias,
            &mut self.scale_head.weight,
            &mut self.scale_head.bias,
            &mut self.shift_head.weight,
            &mut self.shift_head.bias,
        ]
    }

    /// `(s, t)` for a batch, zero on pass-through coordinates.
    fn scale_shift<'a>(&'a self, tape: &mut Tape<'a>, input: Var, params: &[Var]) -> Result<(Var, Var)> {
        let mask = tape.constant_ref(&self.mask);
        let complement = tape.constant_ref(&self.complement);
        let kept = tape.broadcast_mul(input, mask)?;
        let h = Dense::forward(tape, kept, params[0], params[1])?;
        let h = tape.tanh(h)?;
        let h = Dense::forward(tape, h, params[2], params[3])?;
        let h = tape.tanh(h)?;
        let raw = Dense::forward(tape, h, params[4], params[5])?;
        let s = tape.tanh(raw)?;
        let s = tape.scale(s, SCALE_BOUND)?;
        let s = tape.broadcast_mul(s, complement)?;
        let t = Dense::forward(tape, h, params[6], params[7])?;
        let t = tape.broadcast_mul(t, complement)?;
        Ok((s, t))
    }

    /// Latent to data on a `[batch, dim]` input. Returns the output and the summed
    /// log|det| over the whole batch.
    pub fn decode_on_tape<'a>(&'a self, tape: &mut Tape<'a>, z: Var, params: &[Var]) -> Result<(Var, Var)> {
        let (s, t) = self.scale_shift(tape, z, params)?;
        let e = tape.exp(s)?;
        let scaled = tape.mul(z, e)?;
        let x = tape.add(scaled, t)?;
        let log_det = tape.sum(s)?;
        Ok((x, log_det))
    }

    /// Data to latent. The log|det| is that of the inverse map, i.e. `-sum(s)`.
    pub fn encode_on_tape<'a>(&'a self, tape: &mut Tape<'a>, x: Var, params: &[Var]) -> Result<(Var, Var)> {
        let (s, t) = self.scale_shift(tape, x, params)?;
        let shifted = tape.sub(x, t)?;
        let neg_s = tape.neg(s)?;
        let e = tape.exp(neg_s)?;
        let z = tape.mul(shifted, e)?;
        let total = tape.sum(s)?;
        let log_det = tape.neg(total)?;
        Ok((z, log_det))
    }
}
