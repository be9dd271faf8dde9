mod common;

use proptest::prelude::*;
use rand::Rng;
use resilience::gbt::{fit_gbt, BoostedEnsemble, GbtParams, Output};
use resilience::numeric::{logistic_loss, logit, sigmoid};
use resilience::Matrix;
use serde::Deserialize;

fn dataset(seed: u64, n: usize, m: usize, missing: f64) -> (Matrix, Vec<u8>) {
    let mut r = common::rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
        let signal = row[0] - 0.5 * row[m - 1] * row[0];
        y.push(u8::from(r.random_bool(sigmoid(2.0 * signal))));
        rows.push(
            row.into_iter()
                .map(|v| if r.random_bool(missing) { f64::NAN } else { v })
                .collect(),
        );
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn mean_loss(model: &BoostedEnsemble, x: &Matrix, y: &[u8]) -> f64 {
    let m = model.predict_matrix(x, Output::Margin).unwrap();
    m.iter().zip(y).map(|(&m, &y)| logistic_loss(y as f64, m)).sum::<f64>() / y.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn full_sample_loss_never_increases(seed in any::<u64>(), depth in 1usize..=4, lambda in 0.0f64..5.0) {
        let (x, y) = dataset(seed, 150, 3, 0.1);
        let p = GbtParams { n_trees: 15, learning_rate: 0.1, max_depth: depth, lambda, ..GbtParams::default() };
        let model = fit_gbt(&x, &y, &p).unwrap();
        prop_assert_eq!(model.training_log.len(), 16);
        for w in model.training_log.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        prop_assert!((model.training_log[15] - mean_loss(&model, &x, &y)).abs() < 1e-12);
    }

    #[test]
    fn trees_respect_structure_limits(seed in any::<u64>(), depth in 1usize..=5, mch in 0.0f64..8.0) {
        let (x, y) = dataset(seed, 120, 4, 0.05);
        let p = GbtParams { n_trees: 5, max_depth: depth, min_child_hessian: mch, subsample: 0.7, seed, ..GbtParams::default() };
        let model = fit_gbt(&x, &y, &p).unwrap();
        for t in &model.trees {
            prop_assert!(t.depth() <= depth);
            if t.nodes().len() > 1 {
                for n in t.nodes().iter().skip(1) {
                    prop_assert!(n.cover >= mch - 1e-12);
                }
            }
        }
    }

    #[test]
    fn increasing_feature_maps_do_not_change_predictions(seed in any::<u64>()) {
        let (x, y) = dataset(seed, 100, 3, 0.1);
        let mut xt = x.clone();
        xt.map_column(0, |v| v.exp());
        xt.map_column(2, |v| 3.0 * v - 7.0);
        let p = GbtParams { n_trees: 10, max_depth: 3, ..GbtParams::default() };
        let a = fit_gbt(&x, &y, &p).unwrap().predict_matrix(&x, Output::Margin).unwrap();
        let b = fit_gbt(&xt, &y, &p).unwrap().predict_matrix(&xt, Output::Margin).unwrap();
        prop_assert!(common::max_abs_diff(&a, &b) < 1e-12);
    }
}

#[test]
fn first_root_cover_is_total_hessian() {
    let (x, y) = dataset(4, 200, 3, 0.0);
    let model = fit_gbt(&x, &y, &GbtParams { n_trees: 1, ..GbtParams::default() }).unwrap();
    let p = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
    assert!((model.base_margin - logit(p)).abs() < 1e-12);
    let root = model.trees[0].node(0).cover;
    assert!((root - 200.0 * p * (1.0 - p)).abs() < 1e-9);
}

#[test]
fn stump_leaf_weights_by_hand() {
    // Perfect split at x = 0.5 with base rate 1/2: g = p - y = +-1/2, h = 1/4.
    let x = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]]).unwrap();
    let y = [0, 0, 1, 1];
    let p = GbtParams { n_trees: 1, max_depth: 1, lambda: 1.0, learning_rate: 0.5, min_child_hessian: 0.0, ..GbtParams::default() };
    let t = &fit_gbt(&x, &y, &p).unwrap().trees[0];
    assert_eq!(t.nodes().len(), 3);
    let root = t.node(0);
    assert_eq!(root.threshold, 1.0);
    // left: G = 1, H = 0.5 -> -1 / 1.5 * 0.5
    assert!((t.node(root.left.unwrap()).weight + 1.0 / 3.0).abs() < 1e-15);
    assert!((t.node(root.right.unwrap()).weight - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn large_gamma_keeps_single_leaf() {
    let (x, y) = dataset(8, 100, 3, 0.0);
    let model = fit_gbt(&x, &y, &GbtParams { n_trees: 3, gamma: 1e6, ..GbtParams::default() }).unwrap();
    assert!(model.trees.iter().all(|t| t.nodes().len() == 1));
}

#[test]
fn thread_count_does_not_change_the_model() {
    let (x, y) = dataset(21, 500, 6, 0.1);
    let p = GbtParams { n_trees: 20, max_depth: 4, subsample: 0.8, seed: 99, ..GbtParams::default() };
    let fit_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_gbt(&x, &y, &p).unwrap().to_json().unwrap())
    };
    let one = fit_with(1);
    assert_eq!(one, fit_with(3));
    assert_eq!(one, fit_with(8));
}

#[test]
fn json_round_trip_is_exact() {
    let (x, y) = dataset(2, 150, 3, 0.2);
    let model = fit_gbt(&x, &y, &GbtParams { n_trees: 8, ..GbtParams::default() }).unwrap();
    let back = BoostedEnsemble::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(model, back);
}

#[derive(Deserialize)]
struct XgbFit {
    base_rate: f64,
    margin: Vec<f64>,
}

/// Same data, hyperparameters and starting margin as an exact-greedy xgboost
/// fit; margins agree to float32 precision.
#[test]
fn margins_agree_with_xgboost() {
    let n = 80;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..3).map(|j| (0.7 * (i + 1) as f64 * (j as f64 + 1.3)).sin() * 3.0 + 0.01 * i as f64).collect())
        .collect();
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let r = &rows[i];
            u8::from((1.7 * i as f64).cos() + r[0] * 0.4 - r[1] * r[2] * 0.2 > 0.0)
        })
        .collect();
    let fx: XgbFit = serde_json::from_str(include_str!("fixtures/xgboost_fit.json")).unwrap();
    let x = Matrix::from_rows(&rows).unwrap();
    let p = GbtParams { n_trees: 5, learning_rate: 0.3, max_depth: 2, lambda: 1.0, min_child_hessian: 1.0, ..GbtParams::default() };
    let model = fit_gbt(&x, &y, &p).unwrap();
    assert!((sigmoid(model.base_margin) - fx.base_rate).abs() < 1e-12);
    let ours = model.predict_matrix(&x, Output::Margin).unwrap();
    assert!(common::max_abs_diff(&ours, &fx.margin) < 1e-5, "max diff {}", common::max_abs_diff(&ours, &fx.margin));
}
