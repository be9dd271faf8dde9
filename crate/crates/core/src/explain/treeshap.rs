//! Polynomial-time path-dependent Tree SHAP, with the conditioning variant
//! used for pairwise interaction values.

use crate::gbt::{Node, Tree};

/// Share of a node's training cover that flows to `child`. Zero-cover nodes split evenly.
#[inline]
pub(crate) fn child_fraction(parent: &Node, child: &Node) -> f64 {
    if parent.cover > 0.0 {
        child.cover / parent.cover
    } else {
        0.5
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend_path(path: &mut Vec<PathElement>, depth: usize, zero_fraction: f64, one_fraction: f64, feature: usize) {
    if path.len() <= depth {
        path.resize(depth + 1, PathElement::default());
    }
    path[depth] = PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * (depth + 1) as f64 / ((i + 1) as f64 * one);
            next_one_portion = tmp - path[i].pweight * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) as f64 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one_portion * (depth + 1) as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((depth - i) as f64 / (depth + 1) as f64);
        }
    }
    total
}

/// Conditioning applied to one feature during the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Condition {
    None,
    /// Feature fixed to the row's value.
    On(usize),
    /// Feature marginalized over its cover-weighted branches.
    Off(usize),
}

struct Walk<'a> {
    tree: &'a Tree,
    row: &'a [f64],
    phi: &'a mut [f64],
    condition: Condition,
}

impl Walk<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        node_index: usize,
        mut path: Vec<PathElement>,
        mut depth: usize,
        parent_zero: f64,
        parent_one: f64,
        parent_feature: usize,
        condition_fraction: f64,
    ) {
        // A branch that carries no cover and is off the row's path contributes nothing.
        if condition_fraction == 0.0 || (parent_zero == 0.0 && parent_one == 0.0) {
            return;
        }
        let cond_feature = match self.condition {
            Condition::None => None,
            Condition::On(f) | Condition::Off(f) => Some(f),
        };
        if cond_feature != Some(parent_feature) {
            extend_path(&mut path, depth, parent_zero, parent_one, parent_feature);
        }
        let node = self.tree.node(node_index);
        let Some(split) = node.feature else {
            for i in 1..=depth {
                let w = unwound_path_sum(&path, depth, i);
                let el = path[i];
                self.phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * node.weight * condition_fraction;
            }
            return;
        };
        let x = self.row[split];
        let hot = node.child_for(x);
        let cold = node.other_child(x);
        let hot_zero = child_fraction(node, self.tree.node(hot));
        let cold_zero = child_fraction(node, self.tree.node(cold));
        let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);

        if let Some(k) = (1..=depth).find(|&k| path[k].feature == split) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(&mut path, depth, k);
            depth -= 1;
        }

        let (mut hot_cf, mut cold_cf) = (condition_fraction, condition_fraction);
        match self.condition {
            Condition::On(f) if f == split => {
                cold_cf = 0.0;
                depth = depth.wrapping_sub(1);
            }
            Condition::Off(f) if f == split => {
                hot_cf *= hot_zero;
                cold_cf *= cold_zero;
                depth = depth.wrapping_sub(1);
            }
            _ => {}
        }
        let next = depth.wrapping_add(1);
        self.recurse(hot, path.clone(), next, hot_zero * incoming_zero, incoming_one, split, hot_cf);
        self.recurse(cold, path, next, cold_zero * incoming_zero, 0.0, split, cold_cf);
    }
}

/// Adds the tree's SHAP values for `row` into `phi` (length M).
pub(crate) fn tree_shap(tree: &Tree, row: &[f64], phi: &mut [f64], condition: Condition) {
    let mut w = Walk {
        tree,
        row,
        phi,
        condition,
    };
    w.recurse(0, Vec::with_capacity(tree.depth() + 2), 0, 1.0, 1.0, NO_FEATURE, 1.0);
}

/// Cover-weighted mean of the tree's leaves.
pub(crate) fn tree_expectation(tree: &Tree) -> f64 {
    fn go(t: &Tree, i: usize) -> f64 {
        let n = t.node(i);
        match (n.left, n.right) {
            (Some(l), Some(r)) => {
                child_fraction(n, t.node(l)) * go(t, l) + child_fraction(n, t.node(r)) * go(t, r)
            }
            _ => n.weight,
        }
    }
    go(tree, 0)
}
