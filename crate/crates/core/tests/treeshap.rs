mod common;

use common::{max_abs_diff, random_ensemble, random_row, rng, shapley_by_permutations};
use proptest::prelude::*;
use resilience::explain::{
    base_value, shap_brute_force, shap_interactions, shap_interactions_brute_force, shap_values,
};
use resilience::gbt::{BoostedEnsemble, Direction, Node, Output, Tree};
use serde::Deserialize;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_subset_enumeration(seed in any::<u64>(), m in 1usize..=6) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, m, 4, 6);
        let row = random_row(&mut r, m);
        let (_, phi) = shap_values(&ens, &row).unwrap();
        let brute = shap_brute_force(&ens, &row).unwrap();
        prop_assert!(max_abs_diff(&phi, &brute) < 1e-10);
    }

    #[test]
    fn matches_permutation_average(seed in any::<u64>(), m in 1usize..=5) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, m, 3, 5);
        let row = random_row(&mut r, m);
        let (_, phi) = shap_values(&ens, &row).unwrap();
        prop_assert!(max_abs_diff(&phi, &shapley_by_permutations(&ens, &row)) < 1e-10);
    }

    #[test]
    fn local_accuracy(seed in any::<u64>(), m in 1usize..=10) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, m, 5, 10);
        let row = random_row(&mut r, m);
        let (phi0, phi) = shap_values(&ens, &row).unwrap();
        let margin = ens.predict(&row, Output::Margin).unwrap();
        prop_assert!((phi0 + phi.iter().sum::<f64>() - margin).abs() < 1e-8);
    }

    #[test]
    fn unused_features_get_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        // Trees only see features 0..3; 3 and 4 are dummies.
        let inner = random_ensemble(&mut r, 3, 4, 5);
        let ens = BoostedEnsemble::new(inner.base_margin, inner.trees.clone(), 5).unwrap();
        let row = random_row(&mut r, 5);
        let (_, phi) = shap_values(&ens, &row).unwrap();
        prop_assert_eq!(phi[3], 0.0);
        prop_assert_eq!(phi[4], 0.0);
        let inter = shap_interactions(&ens, &row).unwrap();
        for j in 0..5 {
            prop_assert_eq!(inter.get(3, j), 0.0);
            prop_assert_eq!(inter.get(j, 4), 0.0);
        }
    }

    #[test]
    fn interactions_match_enumeration(seed in any::<u64>(), m in 2usize..=6) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, m, 4, 5);
        let row = random_row(&mut r, m);
        let fast = shap_interactions(&ens, &row).unwrap();
        let brute = shap_interactions_brute_force(&ens, &row).unwrap();
        prop_assert!(max_abs_diff(&fast.values, &brute.values) < 1e-10);
    }

    #[test]
    fn interaction_rows_sum_to_shap(seed in any::<u64>(), m in 1usize..=8) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, m, 4, 8);
        let row = random_row(&mut r, m);
        let (_, phi) = shap_values(&ens, &row).unwrap();
        let inter = shap_interactions(&ens, &row).unwrap();
        prop_assert!(inter.max_asymmetry() < 1e-8);
        for i in 0..m {
            prop_assert!((inter.row(i).iter().sum::<f64>() - phi[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn ensembles_are_additive(seed in any::<u64>(), m in 1usize..=6) {
        let mut r = rng(seed);
        let a = random_ensemble(&mut r, m, 3, 4);
        let b = random_ensemble(&mut r, m, 3, 4);
        let mut trees = a.trees.clone();
        trees.extend(b.trees.iter().cloned());
        let ab = BoostedEnsemble::new(a.base_margin + b.base_margin, trees, m).unwrap();
        let row = random_row(&mut r, m);
        let (_, pa) = shap_values(&a, &row).unwrap();
        let (_, pb) = shap_values(&b, &row).unwrap();
        let (_, pab) = shap_values(&ab, &row).unwrap();
        let sum: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x + y).collect();
        prop_assert!(max_abs_diff(&sum, &pab) < 1e-12);
        prop_assert!((base_value(&a) + base_value(&b) - base_value(&ab)).abs() < 1e-12);
    }
}

/// Sum of single-split trees: no interactions at all.
#[test]
fn stumps_have_no_interactions() {
    let mut r = rng(5);
    for _ in 0..50 {
        let m = 6;
        let trees: Vec<Tree> = (0..8)
            .map(|_| {
                let mut t = common::random_tree(&mut r, m, 1);
                while t.nodes().len() != 3 {
                    t = common::random_tree(&mut r, m, 1);
                }
                t
            })
            .collect();
        let ens = BoostedEnsemble::new(0.0, trees, m).unwrap();
        let row = random_row(&mut r, m);
        let inter = shap_interactions(&ens, &row).unwrap();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    assert!(inter.get(i, j).abs() <= 1e-10, "({i},{j}) = {}", inter.get(i, j));
                }
            }
        }
    }
}

#[test]
fn single_stump_by_hand() {
    // x0 < 0.5 -> -1 (cover 3), else 2 (cover 1): E = (-3 + 2) / 4 = -0.25.
    let tree = Tree::new(vec![
        Node::split(0, 0.5, Direction::Left, 1, 2, 4.0),
        Node::leaf(-1.0, 3.0),
        Node::leaf(2.0, 1.0),
    ])
    .unwrap();
    let ens = BoostedEnsemble::new(0.1, vec![tree], 2).unwrap();
    let (phi0, phi) = shap_values(&ens, &[1.0, 7.0]).unwrap();
    assert!((phi0 - (0.1 - 0.25)).abs() < 1e-15);
    assert!((phi[0] - 2.25).abs() < 1e-15);
    assert_eq!(phi[1], 0.0);
    let (_, phi) = shap_values(&ens, &[f64::NAN, 7.0]).unwrap();
    assert!((phi[0] + 0.75).abs() < 1e-15);
}

#[derive(Deserialize)]
struct XgbNode {
    feature: Option<usize>,
    threshold: Option<f64>,
    default: Option<Direction>,
    left: Option<usize>,
    right: Option<usize>,
    cover: f64,
    leaf: Option<f64>,
}

#[derive(Deserialize)]
struct XgbFixture {
    #[serde(rename = "M")]
    m: usize,
    trees: Vec<Vec<XgbNode>>,
    rows: Vec<Vec<Option<f64>>>,
    margin: Vec<f64>,
    phi: Vec<Vec<f64>>,
    phi0: Vec<f64>,
    interactions: Vec<Vec<Vec<f64>>>,
}

/// Trees, SHAP values and interaction values exported from xgboost (float32
/// internally, hence the loose tolerance).
#[test]
fn agrees_with_xgboost_export() {
    let fx: XgbFixture =
        serde_json::from_str(include_str!("fixtures/xgboost_treeshap.json")).unwrap();
    let trees = fx
        .trees
        .iter()
        .map(|nodes| {
            Tree::new(
                nodes
                    .iter()
                    .map(|n| match n.feature {
                        Some(f) => Node::split(
                            f,
                            n.threshold.unwrap(),
                            n.default.unwrap(),
                            n.left.unwrap(),
                            n.right.unwrap(),
                            n.cover,
                        ),
                        None => Node::leaf(n.leaf.unwrap(), n.cover),
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let ens = BoostedEnsemble::new(0.0, trees, fx.m).unwrap();
    for (k, raw) in fx.rows.iter().enumerate() {
        let row: Vec<f64> = raw.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        assert!((ens.predict(&row, Output::Margin).unwrap() - fx.margin[k]).abs() < 1e-5);
        let (phi0, phi) = shap_values(&ens, &row).unwrap();
        assert!((phi0 - fx.phi0[k]).abs() < 1e-4, "row {k}: {phi0} vs {}", fx.phi0[k]);
        assert!(max_abs_diff(&phi, &fx.phi[k]) < 1e-4, "row {k}: {phi:?} vs {:?}", fx.phi[k]);
        let inter = shap_interactions(&ens, &row).unwrap();
        for i in 0..fx.m {
            for j in 0..fx.m {
                let want = fx.interactions[k][i][j];
                assert!((inter.get(i, j) - want).abs() < 1e-4, "row {k} ({i},{j}): {} vs {want}", inter.get(i, j));
            }
        }
    }
}
