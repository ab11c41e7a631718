mod common;

use aflow::detection::{auroc, roc_evaluate, LidDetector, MahalanobisDetector};
use aflow::seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::*;

/// Inverse by Gauss-Jordan elimination.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn gaussian_classes<R: Rng>(rng: &mut R, dim: usize, classes: usize, per_class: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let centre: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for _ in 0..per_class {
            feats.push(centre.iter().map(|m| m + normal.sample(rng)).collect());
            labels.push(c);
        }
    }
    (feats, labels)
}

#[test]
fn mahalanobis_matches_explicit_inverse_of_pooled_covariance() {
    let mut rng = seed::rng(40);
    let (dim, classes) = (4, 3);
    let (feats, labels) = gaussian_classes(&mut rng, dim, classes, 30);
    let lambda = 1e-3;
    let det = MahalanobisDetector::fit(&feats, &labels, lambda).unwrap();

    let mut means = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0.0; classes];
    for (f, &y) in feats.iter().zip(&labels) {
        for i in 0..dim {
            means[y][i] += f[i];
        }
        counts[y] += 1.0;
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c);
    }
    let mut cov = vec![vec![0.0; dim]; dim];
    for (f, &y) in feats.iter().zip(&labels) {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += (f[i] - means[y][i]) * (f[j] - means[y][j]);
            }
        }
    }
    let n = feats.len() as f64;
    for (i, row) in cov.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= n;
        }
        row[i] += lambda;
    }
    let inv = invert(&cov);
    for (i, m) in det.class_means().iter().enumerate() {
        assert!(max_abs_diff(m, &means[i]) < 1e-12);
    }
    for _ in 0..20 {
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let expected = means
            .iter()
            .map(|m| {
                let d: Vec<f64> = q.iter().zip(m).map(|(a, b)| a - b).collect();
                (0..dim).map(|i| (0..dim).map(|j| d[i] * inv[i][j] * d[j]).sum::<f64>()).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let got = det.score(&q).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected.max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn mahalanobis_recovers_sampling_parameters() {
    let mut rng = seed::rng(41);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centres = [[2.0, -1.0], [-3.0, 4.0]];
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..5000 {
            let (a, b) = (normal.sample(&mut rng), normal.sample(&mut rng));
            feats.push(vec![centre[0] + 2.0 * a, centre[1] + 0.5 * a + b]);
            labels.push(c);
        }
    }
    let det = MahalanobisDetector::fit(&feats, &labels, 0.0).unwrap();
    for (m, centre) in det.class_means().iter().zip(&centres) {
        assert!(max_abs_diff(m, centre) < 0.1);
    }
    let cov = det.covariance();
    assert!((cov[(0, 0)] - 4.0).abs() < 0.2);
    assert!((cov[(0, 1)] - 1.0).abs() < 0.1);
    assert!((cov[(1, 1)] - 1.25).abs() < 0.1);
    let product = det.precision() * cov;
    for i in 0..2 {
        for j in 0..2 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((product[(i, j)] - expected).abs() < 1e-9);
        }
    }
    let in_dist: f64 = feats.iter().take(2000).map(|f| det.score(f).unwrap()).sum::<f64>() / 2000.0;
    assert!((in_dist - 2.0).abs() < 0.2, "mean in-distribution score {in_dist}");
}

#[test]
fn mahalanobis_rejects_singular_and_tiny_classes() {
    let feats = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
    assert!(MahalanobisDetector::fit(&feats, &[0, 0, 1, 1], 0.0).is_err());
    assert!(MahalanobisDetector::fit(&feats, &[0, 0, 1, 1], 1e-3).is_ok());
    assert!(MahalanobisDetector::fit(&feats, &[0, 0, 0, 1], 1e-3).is_err());
}

#[test]
fn lid_of_a_line_is_one_and_of_a_plane_is_two() {
    let line: Vec<Vec<f64>> = (0..2001).map(|i| vec![i as f64 * 1e-3, 2.0 * i as f64 * 1e-3, 0.5]).collect();
    let lid = LidDetector::new(line, 20).unwrap();
    let on_line = lid.score(&[1.0 + 0.5e-3, 2.0 + 1e-3, 0.5]).unwrap();
    assert!((on_line - 1.0).abs() < 0.15, "line {on_line}");

    let mut rng = seed::rng(42);
    let plane: Vec<Vec<f64>> = (0..20000).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0]).collect();
    let lid = LidDetector::new(plane, 50).unwrap();
    let mut est = 0.0;
    for _ in 0..50 {
        est += lid.score(&[rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), 0.0]).unwrap();
    }
    est /= 50.0;
    assert!((est - 2.0).abs() < 0.2, "plane {est}");
}

#[test]
fn lid_rejects_degenerate_banks() {
    assert!(LidDetector::new(vec![vec![0.0]; 5], 1).is_err());
    assert!(LidDetector::new(vec![vec![0.0]; 5], 5).is_err());
    let lid = LidDetector::new(vec![vec![1.0]; 10], 3).unwrap();
    assert!(lid.score(&[0.0]).is_err());
}

#[test]
fn roc_rejects_empty_and_nan() {
    assert!(auroc(&[], &[1.0]).is_err());
    assert!(roc_evaluate(&[f64::NAN], &[1.0]).is_err());
}

#[test]
fn perfect_separation_has_unit_auroc_and_accuracy() {
    let r = roc_evaluate(&[0.0, 1.0, 2.0], &[3.0, 4.0]).unwrap();
    assert_eq!(r.auroc, 1.0);
    assert_eq!(r.best_threshold_accuracy, 1.0);
    let all_tied = roc_evaluate(&[1.0, 1.0], &[1.0]).unwrap();
    assert_eq!(all_tied.auroc, 0.5);
    assert_eq!(all_tied.best_threshold_accuracy, 0.5);
}

fn brute_balanced_accuracy(clean: &[f64], adv: &[f64]) -> f64 {
    let mut best = 0.5;
    for &t in clean.iter().chain(adv) {
        let tnr = clean.iter().filter(|&&c| c < t).count() as f64 / clean.len() as f64;
        let tpr = adv.iter().filter(|&&a| a >= t).count() as f64 / adv.len() as f64;
        best = f64::max(best, 0.5 * (tpr + tnr));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auroc_equals_all_pairs_count(
        clean in prop::collection::vec(0u8..12, 1..50),
        adv in prop::collection::vec(0u8..12, 1..50),
    ) {
        let c: Vec<f64> = clean.iter().map(|&v| v as f64 * 0.25).collect();
        let a: Vec<f64> = adv.iter().map(|&v| v as f64 * 0.25).collect();
        let r = roc_evaluate(&c, &a).unwrap();
        prop_assert_eq!(r.auroc, auroc_all_pairs(&c, &a));
        prop_assert_eq!(r.best_threshold_accuracy, brute_balanced_accuracy(&c, &a));
        prop_assert_eq!(auroc(&c, &a).unwrap() + auroc(&a, &c).unwrap(), 1.0);
        let ec: Vec<f64> = c.iter().map(|v| v.exp()).collect();
        let ea: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(auroc(&ec, &ea).unwrap(), r.auroc);
    }
}
