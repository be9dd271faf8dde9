//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilience::gbt::{BoostedEnsemble, Direction, Node, Tree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Thresholds and row values share a small lattice so ties (`x == threshold`)
/// happen often; a share of cells is continuous and a share is missing.
fn lattice_value(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..10) {
        0..=5 => rng.random_range(-2..=2) as f64 * 0.5,
        6..=8 => rng.random_range(-1.5..1.5),
        _ => f64::NAN,
    }
}

fn build(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, m: usize, depth: usize, max_depth: usize) -> (usize, f64) {
    let idx = nodes.len();
    nodes.push(Node::leaf(0.0, 0.0));
    let split = depth < max_depth && (depth == 0 || rng.random_bool(0.75));
    if !split {
        // Mostly positive covers; an occasional empty leaf exercises the
        // zero-cover fallback.
        let cover = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(1..40) as f64 };
        nodes[idx] = Node::leaf(rng.random_range(-1.0..1.0), cover);
        return (idx, cover);
    }
    let feature = rng.random_range(0..m);
    let threshold = loop {
        let t = lattice_value(rng);
        if t.is_finite() {
            break t;
        }
    };
    let default = if rng.random_bool(0.5) { Direction::Left } else { Direction::Right };
    let (l, lc) = build(rng, nodes, m, depth + 1, max_depth);
    let (r, rc) = build(rng, nodes, m, depth + 1, max_depth);
    nodes[idx] = Node::split(feature, threshold, default, l, r, lc + rc);
    (idx, lc + rc)
}

pub fn random_tree(rng: &mut ChaCha8Rng, m: usize, max_depth: usize) -> Tree {
    let mut nodes = Vec::new();
    build(rng, &mut nodes, m, 0, max_depth);
    Tree::new(nodes).expect("generated tree is valid")
}

/// Ensemble with up to `max_trees` trees of depth at most `max_depth` over `m` features.
pub fn random_ensemble(rng: &mut ChaCha8Rng, m: usize, max_depth: usize, max_trees: usize) -> BoostedEnsemble {
    let k = rng.random_range(1..=max_trees);
    let trees = (0..k)
        .map(|_| {
            let d = rng.random_range(1..=max_depth);
            random_tree(rng, m, d)
        })
        .collect();
    BoostedEnsemble::new(rng.random_range(-1.0..1.0), trees, m).expect("valid ensemble")
}

pub fn random_row(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| lattice_value(rng)).collect()
}

/// Expected tree output when only the features in `known` are observed,
/// integrating the rest over the training covers. Written independently of
/// the library's own version.
fn expected_tree(tree: &Tree, node: usize, row: &[f64], known: &[bool]) -> f64 {
    let n = tree.node(node);
    let Some(f) = n.feature else { return n.weight };
    let (l, r) = (n.left.unwrap(), n.right.unwrap());
    if known[f] {
        let x = row[f];
        let left = if x.is_nan() { n.default == Direction::Left } else { x < n.threshold };
        return expected_tree(tree, if left { l } else { r }, row, known);
    }
    let (cl, cr) = (tree.node(l).cover, tree.node(r).cover);
    let (wl, wr) = if cl + cr > 0.0 { (cl / (cl + cr), cr / (cl + cr)) } else { (0.5, 0.5) };
    wl * expected_tree(tree, l, row, known) + wr * expected_tree(tree, r, row, known)
}

pub fn expected_margin(ens: &BoostedEnsemble, row: &[f64], known: &[bool]) -> f64 {
    ens.base_margin + ens.trees.iter().map(|t| expected_tree(t, 0, row, known)).sum::<f64>()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Shapley values as the average marginal contribution over all feature
/// orderings (M! of them, so keep M small).
pub fn shapley_by_permutations(ens: &BoostedEnsemble, row: &[f64]) -> Vec<f64> {
    let m = ens.n_features;
    let perms = permutations(m);
    let mut phi = vec![0.0; m];
    for p in &perms {
        let mut known = vec![false; m];
        let mut prev = expected_margin(ens, row, &known);
        for &j in p {
            known[j] = true;
            let cur = expected_margin(ens, row, &known);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter().map(|v| v / perms.len() as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
