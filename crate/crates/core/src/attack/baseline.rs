use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_to_budget, is_success, linf_distance, require_correct, AdversarialResult, Goal};
use crate::autodiff::{Tape, Tensor};
use crate::classifier::{cross_entropy_on_tape, ClassifierModel};
use crate::error::{Error, Result};

/// Cross-entropy and the input-space direction the attacker climbs: `+grad CE(y)`
/// when untargeted, `-grad CE(t)` when targeted.
pub fn ascent_gradient(classifier: &ClassifierModel, x: &Tensor, label: usize, goal: Goal) -> Result<(f64, Tensor)> {
    goal.validate(label, classifier.num_classes())?;
    let mut tape = Tape::new();
    let params = classifier.bind(&mut tape, false);
    let xv = tape.variable(Tensor::new(vec![1, x.len()], x.data().to_vec())?);
    let logits = classifier.logits_on_tape(&mut tape, &params, xv)?;
    let (target, sign) = match goal {
        Goal::Untargeted => (label, 1.0),
        Goal::Targeted(t) => (t, -1.0),
    };
    let ce = cross_entropy_on_tape(&mut tape, logits, &[target])?;
    let loss = tape.value(ce).item()?;
    let mut g = tape.backward(ce)?.take(xv);
    if sign < 0.0 {
        g.data_mut().iter_mut().for_each(|v| *v = -*v);
    }
    Ok((loss, g.reshape(x.shape().to_vec())?))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn finish(
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    goal: Goal,
    x_adv: Tensor,
    iterations_used: usize,
    loss_trace: Vec<f64>,
) -> Result<AdversarialResult> {
    Ok(AdversarialResult {
        success: is_success(classifier, &x_adv, label, goal)?,
        achieved_linf: linf_distance(&x_adv, x),
        x_adv,
        iterations_used,
        loss_trace,
    })
}

/// Single signed-gradient step of size `epsilon`, clamped to the pixel box.
pub fn fgsm_attack(
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    epsilon: f64,
    goal: Goal,
) -> Result<AdversarialResult> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::contract("epsilon must be finite and >= 0"));
    }
    goal.validate(label, classifier.num_classes())?;
    require_correct(classifier, x, label)?;
    let (loss, g) = ascent_gradient(classifier, x, label, goal)?;
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&xi, &gi)| (xi + epsilon * sign(gi)).clamp(0.0, 1.0))
        .collect();
    let x_adv = Tensor::new(x.shape().to_vec(), data)?;
    finish(classifier, x, label, goal, x_adv, 1, vec![loss])
}

/// Iterated signed-gradient attack covering BIM (no random start, no momentum),
/// PGD (uniform random start in the ball) and MI-FGSM (`momentum_mu > 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub random_start: bool,
    pub momentum_mu: f64,
    pub goal: Goal,
}

impl IterativeConfig {
    pub fn bim(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: 40,
            step_size: epsilon / 4.0,
            random_start: false,
            momentum_mu: 0.0,
            goal: Goal::Untargeted,
        }
    }

    pub fn pgd(epsilon: f64) -> Self {
        Self {
            random_start: true,
            ..Self::bim(epsilon)
        }
    }

    pub fn mifgsm(epsilon: f64) -> Self {
        Self {
            momentum_mu: 1.0,
            ..Self::bim(epsilon)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract("epsilon must be finite and >= 0"));
        }
        if self.steps == 0 {
            return Err(Error::contract("steps must be at least 1"));
        }
        // A zero budget makes every step a no-op; allow step_size 0 only then.
        if !(self.step_size > 0.0 || (self.epsilon == 0.0 && self.step_size == 0.0)) {
            return Err(Error::contract("step_size must be positive"));
        }
        if !(self.momentum_mu >= 0.0) {
            return Err(Error::contract("momentum must be >= 0"));
        }
        Ok(())
    }
}

pub fn iterative_attack<R: Rng + ?Sized>(
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    config: &IterativeConfig,
    rng: &mut R,
) -> Result<AdversarialResult> {
    Ok(iterative_attack_traced(classifier, x, label, config, rng)?.0)
}

/// As [`iterative_attack`], also returning every iterate including the start point.
pub fn iterative_attack_traced<R: Rng + ?Sized>(
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    config: &IterativeConfig,
    rng: &mut R,
) -> Result<(AdversarialResult, Vec<Tensor>)> {
    config.validate()?;
    config.goal.validate(label, classifier.num_classes())?;
    require_correct(classifier, x, label)?;
    let eps = config.epsilon;

    let mut current = if config.random_start {
        let noisy: Vec<f64> = x
            .data()
            .iter()
            .map(|&v| if eps > 0.0 { v + rng.gen_range(-eps..=eps) } else { v })
            .collect();
        clip_to_budget(&Tensor::new(x.shape().to_vec(), noisy)?, x, eps)?
    } else {
        x.clone()
    };
    let mut iterates = vec![current.clone()];
    let mut momentum = vec![0.0; x.len()];
    let mut loss_trace = Vec::with_capacity(config.steps);

    for _ in 0..config.steps {
        let (loss, g) = ascent_gradient(classifier, &current, label, config.goal)?;
        loss_trace.push(loss);
        let l1: f64 = g.data().iter().map(|v| v.abs()).sum();
        if l1 > 0.0 {
            for (m, &gi) in momentum.iter_mut().zip(g.data()) {
                *m = config.momentum_mu * *m + gi / l1;
            }
        } else {
            for m in momentum.iter_mut() {
                *m *= config.momentum_mu;
            }
        }
        let stepped: Vec<f64> = current
            .data()
            .iter()
            .zip(&momentum)
            .map(|(&c, &m)| c + config.step_size * sign(m))
            .collect();
        current = clip_to_budget(&Tensor::new(x.shape().to_vec(), stepped)?, x, eps)?;
        iterates.push(current.clone());
    }

    let result = finish(classifier, x, label, config.goal, current, config.steps, loss_trace)?;
    Ok((result, iterates))
}
