mod common;

use proptest::prelude::*;
use rand::Rng;
use resilience::metrics::{auprc, auroc, spearman, spearman_exact_p};
use resilience::numeric::{midranks, pearson};

fn pairwise_auroc(y: &[u8], s: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

/// Precision at every distinct threshold, weighted by the recall gained there.
fn threshold_sweep_ap(y: &[u8], s: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let sel: Vec<usize> = (0..y.len()).filter(|&i| s[i] >= t).collect();
        let tp = sel.iter().filter(|&&i| y[i] == 1).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / sel.len() as f64;
        prev_recall = recall;
    }
    ap
}

fn labelled(seed: u64, n: usize, levels: i32) -> (Vec<u8>, Vec<f64>) {
    let mut r = common::rng(seed);
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
    y[0] = 1;
    y[1] = 0;
    let s = (0..n).map(|i| r.random_range(0..levels) as f64 + 0.3 * y[i] as f64).collect();
    (y, s)
}

proptest! {
    #[test]
    fn auroc_equals_pair_counting(seed in any::<u64>(), n in 2usize..60, levels in 2i32..20) {
        let (y, s) = labelled(seed, n, levels);
        prop_assert!((auroc(&y, &s).unwrap() - pairwise_auroc(&y, &s)).abs() < 1e-12);
    }

    #[test]
    fn auprc_equals_threshold_sweep(seed in any::<u64>(), n in 2usize..=12, levels in 2i32..6) {
        let (y, s) = labelled(seed, n, levels);
        prop_assert!((auprc(&y, &s).unwrap() - threshold_sweep_ap(&y, &s)).abs() < 1e-12);
    }

    #[test]
    fn auroc_ignores_increasing_maps(seed in any::<u64>(), n in 2usize..40) {
        let (y, s) = labelled(seed, n, 7);
        let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp()).collect();
        prop_assert_eq!(auroc(&y, &s).unwrap(), auroc(&y, &t).unwrap());
        prop_assert_eq!(auprc(&y, &s).unwrap(), auprc(&y, &t).unwrap());
    }

    #[test]
    fn spearman_is_pearson_of_midranks(seed in any::<u64>(), n in 3usize..50) {
        let mut r = common::rng(seed);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = spearman(&a, &b).unwrap().rho;
        let want = pearson(&midranks(&a), &midranks(&b));
        match (got, want) {
            (Some(g), Some(w)) => prop_assert!((g - w).abs() < 1e-12),
            (g, w) => prop_assert_eq!(g, w),
        }
    }
}

#[test]
fn frozen_reference_values() {
    let n = 30;
    let y: Vec<u8> = (0..n).map(|i| u8::from((2.1 * i as f64).sin() + 0.3 > 0.0)).collect();
    let s: Vec<f64> = (0..n).map(|i| ((0.9 * i as f64).cos() * 4.0).round() / 4.0).collect();
    assert!((auroc(&y, &s).unwrap() - 0.5375).abs() < 1e-12);
    assert!((auprc(&y, &s).unwrap() - 0.7103576134010917).abs() < 1e-12);
    let a: Vec<f64> = (0..n).map(|i| ((0.5 * i as f64).sin() * 3.0).round()).collect();
    let b: Vec<f64> = (0..n).map(|i| (0.5 * i as f64 + 0.4).sin() + 0.1 * i as f64).collect();
    let r = spearman(&a, &b).unwrap();
    assert!((r.rho.unwrap() - 0.508553173379302).abs() < 1e-12);
    assert!((r.p_value.unwrap() - 0.004110212659208158).abs() < 1e-9);
}

#[test]
fn exact_spearman_p_small_cases() {
    // Perfect agreement on 5 points: 2 of 120 orderings reach |rho| = 1.
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert!((spearman_exact_p(&a, &a).unwrap().unwrap() - 2.0 / 120.0).abs() < 1e-15);
    assert!(spearman_exact_p(&a, &[1.0; 5]).unwrap().is_none());
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(auroc(&[1, 1], &[0.1, 0.2]).is_err());
    assert!(auprc(&[0, 0], &[0.1, 0.2]).is_err());
    assert!(auroc(&[1, 0], &[f64::NAN, 0.2]).is_err());
    assert!(spearman(&[1.0, 2.0], &[2.0, 1.0]).is_err());
}
