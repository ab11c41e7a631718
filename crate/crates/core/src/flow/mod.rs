//! Affine-coupling normalizing flow with a standard-normal base density.
//!
//! `decode` is the generative direction (latent to data) and `encode` its inverse.
//! Both directions are built from tape operations, so gradients with respect to
//! inputs or parameters come from the same code path that produces values.

mod coupling;
mod preprocess;
mod train;

use std::f64::consts::PI;

use rand::Rng;

pub use coupling::{alternating_mask, CouplingLayer, PARAMS_PER_LAYER, SCALE_BOUND};
pub use preprocess::PreprocessSpec;
pub use train::{mean_nll, nll_on_tape, train_nll, FlowTrainConfig, TrainTrace};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn;

/// Point in latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(Tensor);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("latent vectors must be nonempty and finite"));
        }
        Ok(Self(Tensor::vector(values)))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    dim: usize,
    layers: Vec<CouplingLayer>,
}

impl FlowModel {
    pub fn new(dim: usize, layers: Vec<CouplingLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a flow needs at least one coupling layer"));
        }
        if let Some(bad) = layers.iter().find(|l| l.dim() != dim) {
            return Err(Error::contract(format!(
                "layer dimension {} does not match flow dimension {dim}",
                bad.dim()
            )));
        }
        Ok(Self { dim, layers })
    }

    /// Untrained flow that is exactly the identity map.
    pub fn identity<R: Rng + ?Sized>(dim: usize, num_layers: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|k| CouplingLayer::identity(dim, hidden, alternating_mask(dim, k), rng))
            .collect::<Result<_>>()?;
        Self::new(dim, layers)
    }

    /// Flow with random non-zero output heads (head weights uniform in `[-limit, limit]`).
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        num_layers: usize,
        hidden: usize,
        limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|k| CouplingLayer::random(dim, hidden, alternating_mask(dim, k), limit, rng))
            .collect::<Result<_>>()?;
        Self::new(dim, layers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].hidden_width()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, track: bool) -> Vec<Var> {
        nn::bind(tape, &self.parameters(), track)
    }

    fn layer_params(params: &[Var], k: usize) -> &[Var] {
        &params[k * PARAMS_PER_LAYER..(k + 1) * PARAMS_PER_LAYER]
    }

    fn check_batch(&self, tape: &Tape<'_>, v: Var) -> Result<()> {
        match tape.value(v).shape() {
            [_, d] if *d == self.dim => Ok(()),
            other => Err(Error::contract(format!(
                "flow of dimension {} got input of shape {other:?}",
                self.dim
            ))),
        }
    }

    /// Generative map applied to a `[batch, dim]` latent. Returns the data-space
    /// output and the batch-summed log|det dx/dz|.
    pub fn decode_on_tape<'a>(&'a self, tape: &mut Tape<'a>, params: &[Var], z: Var) -> Result<(Var, Var)> {
        self.check_batch(tape, z)?;
        let mut h = z;
        let mut log_det: Option<Var> = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let (next, ld) = layer.decode_on_tape(tape, h, Self::layer_params(params, k))?;
            h = next;
            log_det = Some(match log_det {
                Some(acc) => tape.add(acc, ld)?,
                None => ld,
            });
        }
        Ok((h, log_det.expect("at least one layer")))
    }

    /// Inverse map on a `[batch, dim]` input. Returns the latent and the
    /// batch-summed log|det dz/dx|.
    pub fn encode_on_tape<'a>(&'a self, tape: &mut Tape<'a>, params: &[Var], x: Var) -> Result<(Var, Var)> {
        self.check_batch(tape, x)?;
        let mut h = x;
        let mut log_det: Option<Var> = None;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (next, ld) = layer.encode_on_tape(tape, h, Self::layer_params(params, k))?;
            h = next;
            log_det = Some(match log_det {
                Some(acc) => tape.add(acc, ld)?,
                None => ld,
            });
        }
        Ok((h, log_det.expect("at least one layer")))
    }

    fn as_row(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.dim {
            return Err(Error::contract(format!(
                "flow of dimension {} got {} values",
                self.dim,
                x.len()
            )));
        }
        Tensor::new(vec![1, self.dim], x.data().to_vec())
    }

    /// `z = f^-1(x)` and `log|det dz/dx|`.
    pub fn encode(&self, x: &Tensor) -> Result<(LatentVector, f64)> {
        let row = self.as_row(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.constant(row);
        let (z, log_det) = self.encode_on_tape(&mut tape, &params, input)?;
        let z = LatentVector::new(tape.value(z).data().to_vec())?;
        Ok((z, tape.value(log_det).item()?))
    }

    pub fn decode(&self, z: &LatentVector) -> Result<Tensor> {
        Ok(self.decode_with_log_det(z)?.0)
    }

    /// `x = f(z)` and `log|det dx/dz|`.
    pub fn decode_with_log_det(&self, z: &LatentVector) -> Result<(Tensor, f64)> {
        let row = self.as_row(z.as_tensor())?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.constant(row);
        let (x, log_det) = self.decode_on_tape(&mut tape, &params, input)?;
        let x = Tensor::vector(tape.value(x).data().to_vec());
        Ok((x, tape.value(log_det).item()?))
    }

    /// `log p0(f^-1(x)) + log|det df^-1/dx|` with `p0` the standard normal.
    pub fn log_prob(&self, x: &Tensor) -> Result<f64> {
        let (z, log_det) = self.encode(x)?;
        Ok(standard_normal_log_density(z.values()) + log_det)
    }
}

/// Log-density of the standard normal in `values.len()` dimensions.
pub fn standard_normal_log_density(values: &[f64]) -> f64 {
    let sq: f64 = values.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * values.len() as f64 * (2.0 * PI).ln()
}
