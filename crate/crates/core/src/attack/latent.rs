use super::{clip_to_budget, linf_distance, margin_loss_on_tape, require_correct, AdversarialResult, AttackConfig};
use crate::autodiff::{ops::argmax, AdamConfig, AdamState, Tape, Tensor};
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// Per-iteration record of the latent attack.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentTrace {
    /// Latent at the start of each iteration.
    pub latents: Vec<Tensor>,
    /// Decoded candidate before clipping, in pixel space.
    pub candidates: Vec<Tensor>,
}

/// Latent-space attack through a trained flow.
///
/// The clean input is encoded once. Each iteration decodes the current latent,
/// projects the decoded image into the budget, and stops if the projected image
/// fools the classifier; otherwise one Adam step is taken on the latent against
/// the margin loss of the unprojected decoded image. The latent is carried
/// forward as is and never re-encoded from the projected image.
pub fn aflow_attack(
    flow: &FlowModel,
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    run(flow, classifier, x, label, config, None)
}

pub fn aflow_attack_traced(
    flow: &FlowModel,
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
) -> Result<(AdversarialResult, LatentTrace)> {
    let mut trace = LatentTrace::default();
    let result = run(flow, classifier, x, label, config, Some(&mut trace))?;
    Ok((result, trace))
}

fn run(
    flow: &FlowModel,
    classifier: &ClassifierModel,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
    mut trace: Option<&mut LatentTrace>,
) -> Result<AdversarialResult> {
    config.validate(label, classifier.num_classes())?;
    if flow.dim() != x.len() {
        return Err(Error::contract(format!(
            "flow dimension {} does not match input of {} values",
            flow.dim(),
            x.len()
        )));
    }
    require_correct(classifier, x, label)?;

    let start = match &config.preprocess {
        Some(spec) => spec.preprocess_deterministic(x)?,
        None => x.clone(),
    };
    let (z0, _) = flow.encode(&start)?;
    let dim = flow.dim();
    let mut z = Tensor::new(vec![1, dim], z0.into_tensor().into_data())?;
    let mut adam = AdamState::new(dim, AdamConfig::with_lr(config.lr))?;
    let mut loss_trace = Vec::with_capacity(config.max_queries);
    let mut last = x.clone();

    for iteration in 1..=config.max_queries {
        let mut tape = Tape::new();
        let flow_params = flow.bind(&mut tape, false);
        let clf_params = classifier.bind(&mut tape, false);
        let zv = tape.variable(z.clone());
        let (decoded, _) = flow.decode_on_tape(&mut tape, &flow_params, zv)?;
        let pixels = match &config.preprocess {
            Some(spec) => spec.postprocess_on_tape(&mut tape, decoded)?,
            None => decoded,
        };
        let candidate = tape.value(pixels).clone().reshape(x.shape().to_vec())?;
        if let Some(t) = trace.as_deref_mut() {
            t.latents.push(z.clone());
            t.candidates.push(candidate.clone());
        }
        if !candidate.is_finite() {
            return Err(Error::Optimization {
                iteration,
                reason: "decoded candidate is not finite".into(),
            });
        }
        let clipped = clip_to_budget(&candidate, x, config.epsilon)?;
        let predicted = argmax(&classifier.logits(&clipped)?);
        if config.goal.achieved(predicted, label) {
            return Ok(AdversarialResult {
                achieved_linf: linf_distance(&clipped, x),
                x_adv: clipped,
                success: true,
                iterations_used: iteration,
                loss_trace,
            });
        }
        last = clipped;

        let logits = classifier.logits_on_tape(&mut tape, &clf_params, pixels)?;
        let loss = margin_loss_on_tape(&mut tape, logits, label, config.goal, config.kappa)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Optimization {
                iteration,
                reason: format!("margin loss is {value}"),
            });
        }
        loss_trace.push(value);
        let grad = tape.backward(loss)?.take(zv);
        adam.step_tensor(&mut z, &grad)?;
    }

    Ok(AdversarialResult {
        achieved_linf: linf_distance(&last, x),
        x_adv: last,
        success: false,
        iterations_used: config.max_queries,
        loss_trace,
    })
}
