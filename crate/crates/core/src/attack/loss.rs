use super::Goal;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

fn split_indices(classes: usize, keep: usize) -> Vec<usize> {
    (0..classes).filter(|&k| k != keep).collect()
}

fn check(classes: usize, label: usize, goal: Goal, kappa: f64) -> Result<()> {
    if classes < 2 {
        return Err(Error::contract("margin loss needs at least two logits"));
    }
    if !(kappa >= 0.0) {
        return Err(Error::contract("kappa must be >= 0"));
    }
    goal.validate(label, classes)
}

/// Confidence-margin objective, minimized by the attacker.
///
/// Untargeted: `max(z_y - max_{k != y} z_k, -kappa)`.
/// Targeted:   `max(max_{k != t} z_k - z_t, -kappa)`.
pub fn margin_loss(logits: &[f64], label: usize, goal: Goal, kappa: f64) -> Result<f64> {
    check(logits.len(), label, goal, kappa)?;
    let anchor = match goal {
        Goal::Untargeted => label,
        Goal::Targeted(t) => t,
    };
    let best_other = split_indices(logits.len(), anchor)
        .into_iter()
        .map(|k| logits[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let diff = match goal {
        Goal::Untargeted => logits[anchor] - best_other,
        Goal::Targeted(_) => best_other - logits[anchor],
    };
    Ok(diff.max(-kappa))
}

/// Differentiable [`margin_loss`] on a single row of logits (`[C]` or `[1, C]`).
pub fn margin_loss_on_tape(tape: &mut Tape<'_>, logits: Var, label: usize, goal: Goal, kappa: f64) -> Result<Var> {
    let classes = tape.value(logits).len();
    check(classes, label, goal, kappa)?;
    let anchor = match goal {
        Goal::Untargeted => label,
        Goal::Targeted(t) => t,
    };
    let picked = tape.select(logits, vec![anchor])?;
    let picked = tape.sum(picked)?;
    let others = tape.select(logits, split_indices(classes, anchor))?;
    let best_other = tape.max_reduce(others)?;
    let diff = match goal {
        Goal::Untargeted => tape.sub(picked, best_other)?,
        Goal::Targeted(_) => tape.sub(best_other, picked)?,
    };
    tape.clamp(diff, -kappa, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn untargeted_examples() {
        assert_eq!(margin_loss(&[2.0, 1.0], 0, Goal::Untargeted, 0.0).unwrap(), 1.0);
        assert_eq!(margin_loss(&[1.0, 2.0], 0, Goal::Untargeted, 0.0).unwrap(), 0.0);
        assert_eq!(margin_loss(&[1.0, 2.0], 0, Goal::Untargeted, 0.5).unwrap(), -0.5);
    }

    #[test]
    fn targeted_example_and_monotone_sweep() {
        assert_eq!(margin_loss(&[3.0, 1.0, 0.0], 0, Goal::Targeted(2), 0.0).unwrap(), 3.0);
        let mut prev = f64::INFINITY;
        for i in 0..=80 {
            let lt = -1.0 + 0.05 * i as f64;
            let v = margin_loss(&[3.0, 1.0, lt], 0, Goal::Targeted(2), 0.0).unwrap();
            assert!(v <= prev);
            if lt < 3.0 {
                assert!(v < prev);
            }
            prev = v;
        }
    }

    #[test]
    fn invalid_labels() {
        assert!(margin_loss(&[1.0, 2.0], 2, Goal::Untargeted, 0.0).is_err());
        assert!(margin_loss(&[1.0, 2.0], 0, Goal::Targeted(0), 0.0).is_err());
        assert!(margin_loss(&[1.0], 0, Goal::Untargeted, 0.0).is_err());
    }

    #[test]
    fn tape_matches_plain() {
        let logits = [0.3, -1.2, 2.5, 0.9];
        for (label, goal) in [(0, Goal::Untargeted), (2, Goal::Untargeted), (1, Goal::Targeted(3))] {
            let mut tape = Tape::new();
            let l = tape.variable(Tensor::matrix(1, 4, logits.to_vec()).unwrap());
            let v = margin_loss_on_tape(&mut tape, l, label, goal, 0.25).unwrap();
            assert_eq!(
                tape.value(v).item().unwrap(),
                margin_loss(&logits, label, goal, 0.25).unwrap()
            );
        }
    }
}
