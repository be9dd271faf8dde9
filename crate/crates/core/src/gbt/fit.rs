use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{Direction, Node, Tree};
use super::{split_gain, BoostedEnsemble, GbtParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::{logistic_loss, mix_seed, sigmoid};

const NOT_IN_NODE: u32 = u32::MAX;

/// Non-missing values of one feature sorted ascending (ties by row), plus
/// the rows where it is missing.
struct SortedColumn {
    entries: Vec<(f64, u32)>,
    missing: Vec<u32>,
}

fn presort(x: &Matrix) -> Vec<SortedColumn> {
    (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let mut entries = Vec::with_capacity(x.n_rows());
            let mut missing = Vec::new();
            for i in 0..x.n_rows() {
                let v = x.get(i, j);
                if v.is_nan() {
                    missing.push(i as u32);
                } else {
                    entries.push((v, i as u32));
                }
            }
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            SortedColumn { entries, missing }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default: Direction,
}

impl Candidate {
    fn better_than(&self, other: &Option<Candidate>) -> bool {
        other.is_none_or(|o| self.gain > o.gain)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    g: f64,
    h: f64,
}

struct Growing {
    sums: Sums,
    depth: usize,
    split: Option<(Candidate, usize, usize)>,
}

struct Grower<'a> {
    x: &'a Matrix,
    columns: &'a [SortedColumn],
    params: &'a GbtParams,
    grad: &'a [f64],
    hess: &'a [f64],
}

impl Grower<'_> {
    fn node_sums(&self, node_of: &[u32], n_nodes: usize) -> Vec<Sums> {
        let mut s = vec![Sums::default(); n_nodes];
        for (i, &n) in node_of.iter().enumerate() {
            if n != NOT_IN_NODE {
                s[n as usize].g += self.grad[i];
                s[n as usize].h += self.hess[i];
            }
        }
        s
    }

    /// Best split per active node for feature `j`; `slot_of[node]` indexes active nodes.
    fn scan_feature(&self, j: usize, node_of: &[u32], slot_of: &[usize], totals: &[Sums]) -> Vec<Option<Candidate>> {
        let n_slots = totals.len();
        let col = &self.columns[j];
        let (lambda, gamma, mch) = (self.params.lambda, self.params.gamma, self.params.min_child_hessian);
        let mut miss = vec![Sums::default(); n_slots];
        for &r in &col.missing {
            let n = node_of[r as usize];
            if n != NOT_IN_NODE {
                let s = slot_of[n as usize];
                if s != usize::MAX {
                    miss[s].g += self.grad[r as usize];
                    miss[s].h += self.hess[r as usize];
                }
            }
        }
        let mut left = vec![Sums::default(); n_slots];
        let mut last = vec![f64::NAN; n_slots];
        let mut best: Vec<Option<Candidate>> = vec![None; n_slots];
        let tol: Vec<f64> = totals
            .iter()
            .map(|t| 1e-12 * (1.0 + (t.g * t.g / (t.h + lambda)).abs()))
            .collect();
        for &(v, r) in &col.entries {
            let n = node_of[r as usize];
            if n == NOT_IN_NODE {
                continue;
            }
            let s = slot_of[n as usize];
            if s == usize::MAX {
                continue;
            }
            if !last[s].is_nan() && v > last[s] {
                let (t, m, l) = (totals[s], miss[s], left[s]);
                let (gr, hr) = (t.g - m.g - l.g, t.h - m.h - l.h);
                let mut consider = |gl: f64, hl: f64, gr: f64, hr: f64, default: Direction| {
                    if hl < mch || hr < mch || hl + lambda <= 0.0 || hr + lambda <= 0.0 {
                        return;
                    }
                    let gain = split_gain(gl, hl, gr, hr, lambda, gamma);
                    let c = Candidate {
                        gain,
                        feature: j,
                        threshold: v,
                        default,
                    };
                    if gain > tol[s] && c.better_than(&best[s]) {
                        best[s] = Some(c);
                    }
                };
                consider(l.g + m.g, l.h + m.h, gr, hr, Direction::Left);
                consider(l.g, l.h, gr + m.g, hr + m.h, Direction::Right);
            }
            left[s].g += self.grad[r as usize];
            left[s].h += self.hess[r as usize];
            last[s] = v;
        }
        best
    }

    fn grow(&self, mut node_of: Vec<u32>) -> Tree {
        let lambda = self.params.lambda;
        let eta = self.params.learning_rate;
        let root = self.node_sums(&node_of, 1)[0];
        let mut nodes = vec![Growing {
            sums: root,
            depth: 0,
            split: None,
        }];
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let active: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&n| nodes[n].depth < self.params.max_depth)
                .collect();
            if active.is_empty() {
                break;
            }
            let mut slot_of = vec![usize::MAX; nodes.len()];
            for (s, &n) in active.iter().enumerate() {
                slot_of[n] = s;
            }
            let totals: Vec<Sums> = active.iter().map(|&n| nodes[n].sums).collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.x.n_cols())
                .into_par_iter()
                .map(|j| self.scan_feature(j, &node_of, &slot_of, &totals))
                .collect();
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            for f in &per_feature {
                for (s, c) in f.iter().enumerate() {
                    if let Some(c) = c {
                        if c.better_than(&best[s]) {
                            best[s] = Some(*c);
                        }
                    }
                }
            }
            let mut next = Vec::new();
            for (s, &n) in active.iter().enumerate() {
                if let Some(c) = best[s] {
                    let depth = nodes[n].depth + 1;
                    let l = nodes.len();
                    for _ in 0..2 {
                        nodes.push(Growing {
                            sums: Sums::default(),
                            depth,
                            split: None,
                        });
                    }
                    nodes[n].split = Some((c, l, l + 1));
                    next.extend([l, l + 1]);
                }
            }
            if next.is_empty() {
                break;
            }
            for (i, slot) in node_of.iter_mut().enumerate() {
                if *slot == NOT_IN_NODE {
                    continue;
                }
                if let Some((c, l, r)) = nodes[*slot as usize].split {
                    let v = self.x.get(i, c.feature);
                    let go_left = if v.is_nan() {
                        c.default == Direction::Left
                    } else {
                        v < c.threshold
                    };
                    *slot = if go_left { l as u32 } else { r as u32 };
                }
            }
            let sums = self.node_sums(&node_of, nodes.len());
            for &n in &next {
                nodes[n].sums = sums[n];
            }
            frontier = next;
        }

        // Children always follow parents, so a reverse pass fills covers bottom-up.
        let mut out: Vec<Node> = vec![Node::leaf(0.0, 0.0); nodes.len()];
        for i in (0..nodes.len()).rev() {
            out[i] = match nodes[i].split {
                Some((c, l, r)) => {
                    let cover = out[l].cover + out[r].cover;
                    Node::split(c.feature, c.threshold, c.default, l, r, cover)
                }
                None => {
                    let Sums { g, h } = nodes[i].sums;
                    let w = if h + lambda > 0.0 { -g / (h + lambda) * eta } else { 0.0 };
                    Node::leaf(w, h)
                }
            };
        }
        Tree::new(out).expect("grown trees are well formed")
    }
}

fn mean_loss(y: &[u8], margins: &[f64]) -> f64 {
    y.iter()
        .zip(margins)
        .map(|(&y, &m)| logistic_loss(f64::from(y), m))
        .sum::<f64>()
        / y.len() as f64
}

/// Fits a boosted ensemble to binary labels.
///
/// Results depend only on the data and `params` (including the seed), not on
/// the size of the rayon thread pool.
pub fn fit_gbt(x: &Matrix, y: &[u8], params: &GbtParams) -> Result<BoostedEnsemble> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Empty("training rows"));
    }
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} rows", y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if x.as_slice().iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidInput("feature values must be finite or missing".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    let base_margin = match params.base_margin {
        Some(b) => b,
        None if positives == 0 || positives == n => return Err(Error::SingleClass),
        None => (positives as f64 / (n - positives) as f64).ln(),
    };

    let columns = presort(x);
    let mut margins = vec![base_margin; n];
    let mut training_log = vec![mean_loss(y, &margins)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let sample_size = ((params.subsample * n as f64).floor() as usize).clamp(1, n);

    for round in 0..params.n_trees {
        let (grad, hess): (Vec<f64>, Vec<f64>) = margins
            .par_iter()
            .zip(y)
            .map(|(&m, &y)| {
                let p = sigmoid(m);
                (p - f64::from(y), p * (1.0 - p))
            })
            .unzip();
        let node_of = if sample_size == n {
            vec![0u32; n]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, round as u64));
            let mut v = vec![NOT_IN_NODE; n];
            for i in sample(&mut rng, n, sample_size) {
                v[i] = 0;
            }
            v
        };
        let tree = Grower {
            x,
            columns: &columns,
            params,
            grad: &grad,
            hess: &hess,
        }
        .grow(node_of);
        margins
            .par_iter_mut()
            .zip(x.as_slice().par_chunks(x.n_cols().max(1)))
            .for_each(|(m, row)| *m += tree.predict(row));
        training_log.push(mean_loss(y, &margins));
        trees.push(tree);
    }

    Ok(BoostedEnsemble {
        base_margin,
        params: params.clone(),
        n_features: x.n_cols(),
        trees,
        training_log,
    })
}
