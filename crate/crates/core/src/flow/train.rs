use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FlowModel, PreprocessSpec};
use crate::autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// When set, the dataset holds pixels in `[0, 1]` and every batch is
    /// dequantized with fresh noise before the likelihood is evaluated.
    pub preprocess: Option<PreprocessSpec>,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 100,
            adam: AdamConfig::with_lr(1e-3),
            seed: 0,
            preprocess: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean NLL over the (fixed-noise) training set before any update.
    pub initial_nll: f64,
    /// Mean of the minibatch losses seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean NLL over the same fixed-noise training set after the last epoch.
    pub final_nll: f64,
}

/// Mean negative log-likelihood of a `[batch, dim]` input.
pub fn nll_on_tape<'a>(model: &'a FlowModel, tape: &mut Tape<'a>, params: &[Var], batch: Var) -> Result<Var> {
    let rows = tape.value(batch).shape()[0] as f64;
    let (z, log_det) = model.encode_on_tape(tape, params, batch)?;
    let sq = tape.mul(z, z)?;
    let sq = tape.sum(sq)?;
    let half_sq = tape.scale(sq, 0.5)?;
    let total = tape.sub(half_sq, log_det)?;
    let mean = tape.scale(total, 1.0 / rows)?;
    let norm = tape.constant(Tensor::scalar(0.5 * model.dim() as f64 * (2.0 * PI).ln()));
    tape.add(mean, norm)
}

fn stack(rows: &[&Tensor], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::contract(format!(
                "dataset row has {} values, flow dimension is {dim}",
                r.len()
            )));
        }
        data.extend_from_slice(r.data());
    }
    Tensor::new(vec![rows.len(), dim], data)
}

/// Mean NLL of `data` (already in the flow's input space).
pub fn mean_nll(model: &FlowModel, data: &[Tensor]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("mean_nll of an empty dataset"));
    }
    let mut total = 0.0;
    for chunk in data.chunks(500) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let batch = stack(&refs, model.dim())?;
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, false);
        let input = tape.constant(batch);
        let nll = nll_on_tape(model, &mut tape, &params, input)?;
        total += tape.value(nll).item()? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Maximum-likelihood training with minibatch Adam and seeded shuffling.
pub fn train_nll(mut model: FlowModel, data: &[Tensor], config: &FlowTrainConfig) -> Result<(FlowModel, TrainTrace)> {
    if data.is_empty() {
        return Err(Error::contract("cannot train a flow on an empty dataset"));
    }
    if config.batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let mut rng = seed::rng(config.seed);
    let dim = model.dim();
    if let Some(spec) = &config.preprocess {
        spec.validate()?;
    }

    // Fixed dequantization draw for the before/after comparison.
    let reference: Vec<Tensor> = match &config.preprocess {
        Some(spec) => {
            let mut eval_rng = seed::derived_rng(config.seed, u64::MAX);
            data.iter()
                .map(|x| spec.preprocess(x, &mut eval_rng))
                .collect::<Result<_>>()?
        }
        None => data.to_vec(),
    };
    let initial_nll = mean_nll(&model, &reference)?;
    if !initial_nll.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            reason: format!("initial NLL is {initial_nll}"),
        });
    }

    let mut adam = Adam::new(&model.parameters(), config.adam)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let rows: Vec<Tensor> = match &config.preprocess {
                Some(spec) => idx
                    .iter()
                    .map(|&i| spec.preprocess(&data[i], &mut rng))
                    .collect::<Result<_>>()?,
                None => idx.iter().map(|&i| data[i].clone()).collect(),
            };
            let refs: Vec<&Tensor> = rows.iter().collect();
            let batch = stack(&refs, dim)?;

            let (loss, grads) = {
                let mut tape = Tape::new();
                let params = model.bind(&mut tape, true);
                let input = tape.constant(batch);
                let nll = nll_on_tape(&model, &mut tape, &params, input)?;
                let loss = tape.value(nll).item()?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        reason: format!("minibatch NLL is {loss}"),
                    });
                }
                let mut g = tape.backward(nll)?;
                let grads: Vec<Tensor> = params.iter().map(|&p| g.take(p)).collect();
                (loss, grads)
            };
            adam.step(model.parameters_mut(), &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }

    let final_nll = mean_nll(&model, &reference)?;
    if !final_nll.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            reason: format!("final NLL is {final_nll}"),
        });
    }
    Ok((
        model,
        TrainTrace {
            initial_nll,
            epoch_losses,
            final_nll,
        },
    ))
}
