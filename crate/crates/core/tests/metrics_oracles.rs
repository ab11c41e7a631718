mod common;

use aflow::metrics::{
    evaluate, evaluate_swapped, gray_histogram, laplacian, psnr, scc, ssim, uqi, ImagePair, MetricSummary,
};
use aflow::seed;
use rand::Rng;

use common::*;

fn random_pair<R: Rng>(rng: &mut R, h: usize, w: usize, spread: f64) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y = x.iter().map(|v| (v + rng.gen_range(-spread..spread)).clamp(0.0, 1.0)).collect();
    (x, y)
}

#[test]
fn metrics_match_naive_references_on_random_pairs() {
    let mut rng = seed::rng(30);
    for k in 0..100 {
        let (h, w) = match k % 3 {
            0 => (8, 8),
            1 => (11, 11),
            _ => (rng.gen_range(12..24), rng.gen_range(12..24)),
        };
        let (x, y) = random_pair(&mut rng, h, w, 0.3);
        let pair = ImagePair::new(&x, &y, h, w).unwrap();
        assert!((ssim(&pair) - ssim_reference(&x, &y, h, w)).abs() <= 1e-10);
        assert!((psnr(&pair) - psnr_reference(&x, &y)).abs() <= 1e-10);
        assert!((uqi(&pair) - uqi_reference(&x, &y)).abs() <= 1e-10);
        assert!((scc(&pair) - scc_reference(&x, &y, h, w)).abs() <= 1e-10);
        assert!(max_abs_diff(&laplacian(&x, h, w), &laplacian_reference(&x, h, w)) <= 1e-12);
        let r = evaluate(&pair);
        assert!((r.l2 - l2_reference(&x, &y)).abs() <= 1e-10);
    }
}

#[test]
fn identical_images_score_perfectly() {
    let mut rng = seed::rng(31);
    let (x, _) = random_pair(&mut rng, 8, 8, 0.1);
    let pair = ImagePair::new(&x, &x, 8, 8).unwrap();
    let r = evaluate(&pair);
    assert!((r.ssim - 1.0).abs() < 1e-12);
    assert!(r.psnr_db.is_infinite());
    assert_eq!(r.l2, 0.0);
    assert!((r.uqi - 1.0).abs() < 1e-12);
    assert!((r.scc - 1.0).abs() < 1e-12);
}

#[test]
fn constant_images_use_the_degenerate_rule() {
    let a = vec![0.5; 64];
    let b = vec![0.25; 64];
    let same = ImagePair::new(&a, &a, 8, 8).unwrap();
    let diff = ImagePair::new(&a, &b, 8, 8).unwrap();
    assert_eq!(uqi(&same), 1.0);
    assert_eq!(scc(&same), 1.0);
    assert_eq!(uqi(&diff), 0.0);
    assert_eq!(scc(&diff), 0.0);
}

#[test]
fn symmetric_metrics_ignore_argument_order() {
    let mut rng = seed::rng(32);
    for _ in 0..20 {
        let (x, y) = random_pair(&mut rng, 16, 16, 0.2);
        let pair = ImagePair::new(&x, &y, 16, 16).unwrap();
        let a = evaluate(&pair);
        let b = evaluate_swapped(&pair);
        for (u, v) in [(a.ssim, b.ssim), (a.psnr_db, b.psnr_db), (a.l2, b.l2), (a.uqi, b.uqi), (a.scc, b.scc)] {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn psnr_of_uniform_offset() {
    let x = vec![0.5; 64];
    let y = vec![0.5 + 1.0 / 255.0; 64];
    let p = psnr(&ImagePair::new(&x, &y, 8, 8).unwrap());
    assert!((p - 20.0 * 255f64.log10()).abs() < 1e-9);
}

#[test]
fn histogram_of_a_ramp_fills_every_bin_once() {
    let ramp: Vec<f64> = (0..256).map(|k| k as f64 / 255.0).collect();
    let h = gray_histogram(&ramp).unwrap();
    assert!(h.bins.iter().all(|&c| c == 1));
    assert_eq!(h.total(), 256);
    assert!(gray_histogram(&[1.2]).is_err());
}

#[test]
fn summary_is_the_mean_of_reports() {
    let mut rng = seed::rng(33);
    let reports: Vec<_> = (0..5)
        .map(|_| {
            let (x, y) = random_pair(&mut rng, 8, 8, 0.1);
            evaluate(&ImagePair::new(&x, &y, 8, 8).unwrap())
        })
        .collect();
    let s = MetricSummary::from_reports(&reports).unwrap();
    assert_eq!(s.pairs, 5);
    let mean_ssim = reports.iter().map(|r| r.ssim).sum::<f64>() / 5.0;
    assert!((s.mean.ssim - mean_ssim).abs() < 1e-12);
    assert!(MetricSummary::from_reports(&[]).is_none());
}

#[test]
fn pairs_reject_bad_shapes() {
    assert!(ImagePair::new(&[0.0; 4], &[0.0; 3], 2, 2).is_err());
    assert!(ImagePair::new(&[0.0; 4], &[0.0; 4], 3, 2).is_err());
}
