//! Dense tanh classifier used as the attack target.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ops::argmax, Adam, AdamConfig, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{self, Dense};
use crate::seed;

/// Inputs with pixel values in `[0, 1]` and integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Image height and width; `height * width` equals the input dimension.
    pub height: usize,
    pub width: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>, num_classes: usize, height: usize, width: usize) -> Result<Self> {
        let ds = Self {
            inputs,
            labels,
            num_classes,
            height,
            width,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} inputs but {} labels",
                self.inputs.len(),
                self.labels.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Validation("need at least two classes".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        let dim = self.height * self.width;
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Validation(format!(
                    "input {i} has {} values, expected {dim}",
                    x.len()
                )));
            }
            if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!("input {i} has pixels outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            inputs: Vec::new(),
            labels: Vec::new(),
            num_classes: self.num_classes,
            height: self.height,
            width: self.width,
        }
    }
}

/// Stack of dense layers with tanh between them and raw logits at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    layers: Vec<Dense>,
}

impl ClassifierModel {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("classifier needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::contract("classifier layer widths do not chain"));
            }
        }
        if layers.last().unwrap().outputs() < 2 {
            return Err(Error::contract("classifier needs at least two classes"));
        }
        Ok(Self { layers })
    }

    /// Glorot-initialized network `dim -> hidden[0] -> ... -> classes`.
    pub fn random<R: Rng + ?Sized>(dim: usize, hidden: &[usize], classes: usize, rng: &mut R) -> Result<Self> {
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let layers = widths.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Self::new(layers)
    }

    pub fn zeros(dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        Self::new(widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().unwrap().inputs()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Dense::outputs).collect()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, track: bool) -> Vec<Var> {
        nn::bind(tape, &self.parameters(), track)
    }

    fn check_batch(&self, tape: &Tape<'_>, x: Var) -> Result<()> {
        match tape.value(x).shape() {
            [_, d] if *d == self.input_dim() => Ok(()),
            other => Err(Error::contract(format!(
                "classifier expects [batch, {}] input, got {other:?}",
                self.input_dim()
            ))),
        }
    }

    /// Penultimate activations for a `[batch, dim]` input.
    pub fn features_on_tape(&self, tape: &mut Tape<'_>, params: &[Var], x: Var) -> Result<Var> {
        self.check_batch(tape, x)?;
        let mut h = x;
        for k in 0..self.layers.len() - 1 {
            h = Dense::forward(tape, h, params[2 * k], params[2 * k + 1])?;
            h = tape.tanh(h)?;
        }
        Ok(h)
    }

    /// Logits for a `[batch, dim]` input.
    pub fn logits_on_tape(&self, tape: &mut Tape<'_>, params: &[Var], x: Var) -> Result<Var> {
        let h = self.features_on_tape(tape, params, x)?;
        let k = self.layers.len() - 1;
        Dense::forward(tape, h, params[2 * k], params[2 * k + 1])
    }

    fn as_row(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "classifier expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Tensor::new(vec![1, x.len()], x.data().to_vec())
    }

    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        let row = self.as_row(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.constant(row);
        let out = self.logits_on_tape(&mut tape, &params, input)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn features(&self, x: &Tensor) -> Result<Vec<f64>> {
        let row = self.as_row(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.constant(row);
        let out = self.features_on_tape(&mut tape, &params, input)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Fraction of examples whose arg-max logit equals the label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::contract("accuracy of an empty dataset"));
        }
        let mut correct = 0usize;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            if self.predict(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Mean cross-entropy of logits `[batch, classes]` against integer labels.
pub fn cross_entropy_on_tape(tape: &mut Tape<'_>, logits: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = match tape.value(logits).shape() {
        [r, c] => (*r, *c),
        other => return Err(Error::contract(format!("cross entropy expects 2-D logits, got {other:?}"))),
    };
    if labels.len() != rows {
        return Err(Error::contract("one label per logits row required"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::contract(format!("label {bad} out of range for {classes} classes")));
    }
    let log_probs = tape.log_softmax(logits)?;
    let picked = tape.select(
        log_probs,
        labels.iter().enumerate().map(|(r, &y)| r * classes + y).collect(),
    )?;
    let mean = tape.mean(picked)?;
    tape.neg(mean)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 50,
            adam: AdamConfig::with_lr(1e-3),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTrace {
    pub initial_accuracy: f64,
    /// Training-set accuracy after each epoch.
    pub epoch_accuracy: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

impl AccuracyTrace {
    pub fn final_accuracy(&self) -> f64 {
        self.epoch_accuracy.last().copied().unwrap_or(self.initial_accuracy)
    }
}

/// Minibatch cross-entropy training with seeded shuffling.
pub fn train_ce(
    mut model: ClassifierModel,
    data: &LabeledDataset,
    config: &ClassifierTrainConfig,
) -> Result<(ClassifierModel, AccuracyTrace)> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    if data.num_classes > model.num_classes() {
        return Err(Error::contract(format!(
            "dataset has {} classes, model outputs {}",
            data.num_classes,
            model.num_classes()
        )));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::contract("dataset dimension does not match the model"));
    }
    if config.batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let mut rng = seed::rng(config.seed);
    let initial_accuracy = model.accuracy(data)?;
    let mut adam = Adam::new(&model.parameters(), config.adam)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let dim = data.dim();
    let mut epoch_accuracy = Vec::with_capacity(config.epochs);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let mut flat = Vec::with_capacity(idx.len() * dim);
            for &i in idx {
                flat.extend_from_slice(data.inputs[i].data());
            }
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new();
                let params = model.bind(&mut tape, true);
                let input = tape.constant(Tensor::new(vec![idx.len(), dim], flat)?);
                let logits = model.logits_on_tape(&mut tape, &params, input)?;
                let ce = cross_entropy_on_tape(&mut tape, logits, &labels)?;
                let loss = tape.value(ce).item()?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        reason: format!("cross entropy is {loss}"),
                    });
                }
                let mut g = tape.backward(ce)?;
                let grads: Vec<Tensor> = params.iter().map(|&p| g.take(p)).collect();
                (loss, grads)
            };
            adam.step(model.parameters_mut(), &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
        epoch_accuracy.push(model.accuracy(data)?);
    }
    Ok((
        model,
        AccuracyTrace {
            initial_accuracy,
            epoch_accuracy,
            epoch_losses,
        },
    ))
}
