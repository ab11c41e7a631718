mod common;

use aflow::autodiff::{Adam, AdamConfig, AdamState, OpKind, Tape, Tensor};
use aflow::classifier::ClassifierModel;
use aflow::seed;
use proptest::prelude::*;
use rand::Rng;

use common::*;

#[test]
fn adam_matches_textbook_recurrence() {
    let mut rng = seed::rng(1);
    let cfg = AdamConfig {
        lr: 0.05,
        beta1: 0.8,
        beta2: 0.99,
        eps: 1e-6,
    };
    let n = 7;
    let mut state = AdamState::new(n, cfg).unwrap();
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut q = p.clone();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    for t in 1..=100 {
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        state.step(&mut p, &g).unwrap();
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t));
            q[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        assert!(max_abs_diff(&p, &q) < 1e-12, "step {t}");
        assert!(max_abs_diff(state.first_moment(), &m) < 1e-12);
        assert!(max_abs_diff(state.second_moment(), &v) < 1e-12);
    }
    assert_eq!(state.steps(), 100);
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let mut state = AdamState::new(3, AdamConfig::with_lr(0.1)).unwrap();
    let mut p = vec![0.0, 1.0, -1.0];
    state.step(&mut p, &[2.0, -5.0, 1e-3]).unwrap();
    let expected = [-0.1, 1.1, -1.1];
    for (a, b) in p.iter().zip(expected) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn adam_over_tensor_list_matches_per_tensor_states() {
    let a = Tensor::vector(vec![1.0, 2.0]);
    let b = Tensor::matrix(2, 2, vec![0.5, -0.5, 0.25, 0.0]).unwrap();
    let mut params = [a.clone(), b.clone()];
    let mut opt = Adam::new(&[&a, &b], AdamConfig::default()).unwrap();
    let mut sa = AdamState::new(2, AdamConfig::default()).unwrap();
    let mut sb = AdamState::new(4, AdamConfig::default()).unwrap();
    let (mut ra, mut rb) = (a.clone(), b.clone());
    for k in 0..5 {
        let ga = Tensor::vector(vec![k as f64, -1.0]);
        let gb = Tensor::matrix(2, 2, vec![1.0, 0.5, -0.25, k as f64]).unwrap();
        opt.step(params.iter_mut().collect(), &[ga.clone(), gb.clone()]).unwrap();
        sa.step_tensor(&mut ra, &ga).unwrap();
        sb.step_tensor(&mut rb, &gb).unwrap();
    }
    assert_eq!(params[0], ra);
    assert_eq!(params[1], rb);
}

#[test]
fn adam_rejects_mismatched_lengths_and_bad_hyperparameters() {
    let mut s = AdamState::new(2, AdamConfig::default()).unwrap();
    assert!(s.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    assert!(AdamState::new(2, AdamConfig { beta1: 1.0, ..AdamConfig::default() }).is_err());
    assert!(AdamState::new(2, AdamConfig { lr: 0.0, ..AdamConfig::default() }).is_err());
}

/// Three-layer tanh network: loss = sum of squared outputs.
#[test]
fn tanh_network_gradients_match_finite_differences() {
    let mut rng = seed::rng(2);
    for _ in 0..20 {
        let d = rng.gen_range(2..6);
        let clf = ClassifierModel::random(d, &[6, 5], 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let params = clf.bind(&mut tape, true);
        let xv = tape.variable(Tensor::new(vec![1, d], x.clone()).unwrap());
        let logits = clf.logits_on_tape(&mut tape, &params, xv).unwrap();
        let sq = tape.mul(logits, logits).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();

        let analytic = grads.wrt(xv).into_data();
        let numeric = fd_gradient(
            &mut |v| mlp_logits(&clf, v).iter().map(|l| l * l).sum(),
            &x,
            1e-6,
        );
        assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-6);

        let first_weight = grads.wrt(params[0]).into_data();
        let w0 = clf.layers()[0].weight.data().to_vec();
        let numeric_w = fd_gradient(
            &mut |w| {
                let mut m = clf.clone();
                m.parameters_mut()[0].data_mut().copy_from_slice(w);
                mlp_logits(&m, &x).iter().map(|l| l * l).sum()
            },
            &w0,
            1e-6,
        );
        assert!(relative_error(&first_weight, &numeric_w, 1e-8) < 1e-6);
    }
}

#[test]
fn hand_backprop_agrees_with_tape_for_margin() {
    let mut rng = seed::rng(3);
    for _ in 0..20 {
        let clf = ClassifierModel::random(5, &[4], 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let label = rng.gen_range(0..3);
        let (_, hand) = margin_and_gradient(&clf, &x, label);
        let numeric = fd_gradient(&mut |v| margin_and_gradient(&clf, v, label).0, &x, 1e-6);
        assert!(relative_error(&hand, &numeric, 1e-8) < 1e-6);
    }
}

#[test]
fn replay_reproduces_forward_values() {
    let mut tape = Tape::new();
    let a = tape.variable(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
    let b = tape.variable(Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.25, -2.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    let d = tape.tanh(c).unwrap();
    let e = tape.log_softmax(d).unwrap();
    let values = tape.replay().unwrap();
    assert_eq!(&values[e.index()], tape.value(e));
    assert_eq!(&values[c.index()], tape.value(c));
}

fn unary_kinds() -> Vec<OpKind> {
    vec![OpKind::Exp, OpKind::Tanh, OpKind::Sigmoid, OpKind::Neg, OpKind::Sum, OpKind::Mean, OpKind::LogSoftmax]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unary_op_gradients_match_finite_differences(
        values in prop::collection::vec(-2.0f64..2.0, 6),
        weights in prop::collection::vec(-1.0f64..1.0, 6),
        which in 0usize..7,
    ) {
        let kind = unary_kinds()[which].clone();
        let shape = vec![2, 3];
        let eval = |v: &[f64]| -> f64 {
            let out = aflow::autodiff::forward_op(&kind, &[&Tensor::new(shape.clone(), v.to_vec()).unwrap()]).unwrap();
            out.data().iter().zip(weights.iter().cycle()).map(|(o, w)| o * w).sum()
        };
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::new(shape.clone(), values.clone()).unwrap());
        let y = tape.apply(kind.clone(), &[x]).unwrap();
        let n = tape.value(y).len();
        let wt = tape.constant(Tensor::new(tape.value(y).shape().to_vec(), weights.iter().cycle().take(n).cloned().collect()).unwrap());
        let prod = tape.mul(y, wt).unwrap();
        let loss = tape.sum(prod).unwrap();
        let analytic = tape.backward(loss).unwrap().wrt(x).into_data();
        let numeric = fd_gradient(&mut |v| eval(v), &values, 1e-6);
        prop_assert!(relative_error(&analytic, &numeric, 1e-6) < 1e-6);
    }

    #[test]
    fn matmul_gradient_matches_finite_differences(
        a in prop::collection::vec(-1.0f64..1.0, 6),
        b in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let eval = |av: &[f64], bv: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..4 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += av[i * 3 + k] * bv[k * 4 + j];
                    }
                    s += acc * acc;
                }
            }
            s
        };
        let mut tape = Tape::new();
        let av = tape.variable(Tensor::matrix(2, 3, a.clone()).unwrap());
        let bv = tape.variable(Tensor::matrix(3, 4, b.clone()).unwrap());
        let c = tape.matmul(av, bv).unwrap();
        let sq = tape.mul(c, c).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        let ga = fd_gradient(&mut |v| eval(v, &b), &a, 1e-6);
        let gb = fd_gradient(&mut |v| eval(&a, v), &b, 1e-6);
        prop_assert!(relative_error(g.wrt(av).data(), &ga, 1e-6) < 1e-6);
        prop_assert!(relative_error(g.wrt(bv).data(), &gb, 1e-6) < 1e-6);
    }
}
