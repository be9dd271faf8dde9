use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side taken by a row whose split feature is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

/// One tree node. Leaves have no feature and no children.
///
/// A row goes left when `x < threshold`, right when `x >= threshold`, and
/// follows `default` when `x` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub default: Direction,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Sum of hessians of the training rows routed here.
    pub cover: f64,
    /// Leaf output, already multiplied by the learning rate. Zero on internal nodes.
    pub weight: f64,
}

impl Node {
    pub fn leaf(weight: f64, cover: f64) -> Self {
        Self {
            feature: None,
            threshold: 0.0,
            default: Direction::Left,
            left: None,
            right: None,
            cover,
            weight,
        }
    }

    pub fn split(feature: usize, threshold: f64, default: Direction, left: usize, right: usize, cover: f64) -> Self {
        Self {
            feature: Some(feature),
            threshold,
            default,
            left: Some(left),
            right: Some(right),
            cover,
            weight: 0.0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }

    /// Child index for value `x` at an internal node.
    #[inline]
    pub fn child_for(&self, x: f64) -> usize {
        let go_left = if x.is_nan() {
            self.default == Direction::Left
        } else {
            x < self.threshold
        };
        if go_left {
            self.left.expect("internal node")
        } else {
            self.right.expect("internal node")
        }
    }

    /// Child that `x` does not visit.
    #[inline]
    pub fn other_child(&self, x: f64) -> usize {
        let hot = self.child_for(x);
        if Some(hot) == self.left {
            self.right.expect("internal node")
        } else {
            self.left.expect("internal node")
        }
    }
}

/// Binary regression tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    nodes: Vec<Node>,
}

impl TryFrom<TreeRepr> for Tree {
    type Error = Error;
    fn try_from(r: TreeRepr) -> Result<Self> {
        Tree::new(r.nodes)
    }
}

impl From<Tree> for TreeRepr {
    fn from(t: Tree) -> Self {
        TreeRepr { nodes: t.nodes }
    }
}

impl Tree {
    /// Validates the structure: nonempty, children after parents, each
    /// non-root node referenced exactly once, covers additive.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree without nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            match (n.feature, n.left, n.right) {
                (None, None, None) => {}
                (Some(_), Some(l), Some(r)) => {
                    if l <= i || r <= i || l >= nodes.len() || r >= nodes.len() || l == r {
                        return Err(Error::InvalidInput(format!("node {i} has invalid children")));
                    }
                    if !n.threshold.is_finite() {
                        return Err(Error::InvalidInput(format!("node {i} has a non-finite threshold")));
                    }
                    parents[l] += 1;
                    parents[r] += 1;
                    let sum = nodes[l].cover + nodes[r].cover;
                    if (n.cover - sum).abs() > 1e-9 * n.cover.abs().max(1.0) {
                        return Err(Error::InvalidInput(format!(
                            "node {i} cover {} differs from children sum {sum}",
                            n.cover
                        )));
                    }
                }
                _ => return Err(Error::InvalidInput(format!("node {i} is half leaf, half split"))),
            }
            if !(n.cover >= 0.0) || !n.weight.is_finite() {
                return Err(Error::InvalidInput(format!("node {i} has invalid cover or weight")));
            }
        }
        if parents.iter().skip(1).any(|&p| p != 1) {
            return Err(Error::InvalidInput("tree nodes must each have exactly one parent".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes.iter().filter_map(|n| n.feature).max()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            match (n.left, n.right) {
                (Some(l), Some(r)) => 1 + go(t, l).max(go(t, r)),
                _ => 0,
            }
        }
        go(self, 0)
    }

    /// Index of the leaf reached by `row` (the structure function).
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return i,
                Some(f) => i = n.child_for(row[f]),
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].weight
    }
}
