//! Latent-space flow attack, pixel-space sign-gradient baselines, and the pieces
//! they share: margin objectives, the L-infinity projection, and success checks.

mod baseline;
mod latent;
mod loss;

pub use baseline::{ascent_gradient, fgsm_attack, iterative_attack, iterative_attack_traced, IterativeConfig};
pub use latent::{aflow_attack, aflow_attack_traced};
pub use loss::{margin_loss, margin_loss_on_tape};

use serde::{Deserialize, Serialize};

use crate::autodiff::{ops::argmax, Tensor};
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::flow::PreprocessSpec;

/// What counts as a successful attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "target")]
pub enum Goal {
    /// Any label other than the true one.
    Untargeted,
    /// Exactly this label.
    Targeted(usize),
}

impl Goal {
    pub fn validate(&self, label: usize, num_classes: usize) -> Result<()> {
        if label >= num_classes {
            return Err(Error::contract(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        if let Goal::Targeted(t) = *self {
            if t >= num_classes {
                return Err(Error::contract(format!(
                    "target {t} out of range for {num_classes} classes"
                )));
            }
            if t == label {
                return Err(Error::contract("target label equals the true label"));
            }
        }
        Ok(())
    }

    /// Success predicate on a predicted label.
    pub fn achieved(&self, predicted: usize, label: usize) -> bool {
        match *self {
            Goal::Untargeted => predicted != label,
            Goal::Targeted(t) => predicted == t,
        }
    }
}

/// Budget pixels are expressed in units of 1/255 at the interfaces.
pub fn epsilon_from_levels(levels: f64) -> f64 {
    levels / 255.0
}

/// Settings of the latent flow attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L-infinity budget in pixel units (`4.0 / 255.0` for a budget of 4).
    pub epsilon: f64,
    pub max_queries: usize,
    /// Adam learning rate on the latent.
    pub lr: f64,
    /// Confidence margin; the loss is clamped below at `-kappa`.
    pub kappa: f64,
    pub goal: Goal,
    /// Map pixels into the flow's logit space before encoding and back after
    /// decoding. `None` feeds raw pixels to the flow.
    pub preprocess: Option<PreprocessSpec>,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_queries: 500,
            lr: 0.01,
            kappa: 0.0,
            goal: Goal::Untargeted,
            preprocess: Some(PreprocessSpec::default()),
        }
    }

    pub fn validate(&self, label: usize, num_classes: usize) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract(format!("epsilon {} must be finite and >= 0", self.epsilon)));
        }
        if self.max_queries == 0 {
            return Err(Error::contract("max_queries must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::contract("kappa must be >= 0"));
        }
        if let Some(p) = &self.preprocess {
            p.validate()?;
        }
        self.goal.validate(label, num_classes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    pub x_adv: Tensor,
    pub success: bool,
    pub iterations_used: usize,
    pub achieved_linf: f64,
    pub loss_trace: Vec<f64>,
}

pub fn linf_distance(a: &Tensor, b: &Tensor) -> f64 {
    a.max_abs_diff(b)
}

/// Project a candidate into the L-infinity ball of radius `epsilon` around
/// `original`, then into the `[0, 1]` box. Equivalent to
/// `original + clamp(candidate - original, -eps, eps)` clamped to `[0, 1]`,
/// written as a clamp to fixed bounds so that it is exactly idempotent.
pub fn clip_to_budget(candidate: &Tensor, original: &Tensor, epsilon: f64) -> Result<Tensor> {
    if candidate.shape() != original.shape() {
        return Err(Error::contract(format!(
            "clip_to_budget: shape {:?} vs {:?}",
            candidate.shape(),
            original.shape()
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::contract("clip_to_budget: epsilon must be >= 0"));
    }
    if !candidate.is_finite() || !original.is_finite() {
        return Err(Error::contract("clip_to_budget: non-finite input"));
    }
    let data = candidate
        .data()
        .iter()
        .zip(original.data())
        .map(|(&c, &x)| {
            let lo = (x - epsilon).max(0.0);
            let hi = (x + epsilon).min(1.0);
            if c > hi {
                hi
            } else if c < lo {
                lo
            } else {
                c
            }
        })
        .collect();
    Tensor::new(candidate.shape().to_vec(), data)
}

pub fn predict_label(classifier: &ClassifierModel, x: &Tensor) -> Result<usize> {
    Ok(argmax(&classifier.logits(x)?))
}

/// Independent re-check of an attack's success flag.
pub fn is_success(classifier: &ClassifierModel, x: &Tensor, label: usize, goal: Goal) -> Result<bool> {
    Ok(goal.achieved(predict_label(classifier, x)?, label))
}

pub(crate) fn require_correct(classifier: &ClassifierModel, x: &Tensor, label: usize) -> Result<()> {
    if x.len() != classifier.input_dim() {
        return Err(Error::contract(format!(
            "input has {} values, classifier expects {}",
            x.len(),
            classifier.input_dim()
        )));
    }
    let predicted = predict_label(classifier, x)?;
    if predicted != label {
        return Err(Error::RejectedInput(format!(
            "input is classified as {predicted}, not its label {label}"
        )));
    }
    Ok(())
}
