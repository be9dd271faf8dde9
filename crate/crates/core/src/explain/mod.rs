//! Exact Shapley attributions for boosted tree ensembles in margin (log-odds) space.
//!
//! The value function is the path-dependent conditional expectation: splits
//! on conditioned features follow the row, other splits average their
//! children weighted by training cover.

mod report;
mod treeshap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{BoostedEnsemble, Tree};
use crate::matrix::Matrix;
use treeshap::{child_fraction, tree_expectation, tree_shap, Condition};

pub use report::{
    beeswarm_export, global_importance, local_profiles, paired_importance, read_beeswarm_csv, write_beeswarm_csv,
    BeeswarmRecord, Contribution, ImportanceEntry, ImportanceRanking, LocalProfiles, PairedImportance, PairedRow,
    Profile,
};

/// Largest feature count accepted by the subset-enumeration oracles.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 15;

fn tree_conditional(tree: &Tree, node: usize, row: &[f64], subset: &[bool]) -> f64 {
    let n = tree.node(node);
    match n.feature {
        None => n.weight,
        Some(f) if subset[f] => tree_conditional(tree, n.child_for(row[f]), row, subset),
        Some(_) => {
            let (l, r) = (n.left.expect("split"), n.right.expect("split"));
            child_fraction(n, tree.node(l)) * tree_conditional(tree, l, row, subset)
                + child_fraction(n, tree.node(r)) * tree_conditional(tree, r, row, subset)
        }
    }
}

/// Expected margin given the features in `subset` (a membership mask of length M).
pub fn conditional_expectation(ensemble: &BoostedEnsemble, row: &[f64], subset: &[bool]) -> Result<f64> {
    ensemble.check_width(row)?;
    if subset.len() != ensemble.n_features {
        return Err(Error::WidthMismatch {
            expected: ensemble.n_features,
            got: subset.len(),
        });
    }
    Ok(ensemble
        .trees
        .iter()
        .fold(ensemble.base_margin, |acc, t| acc + tree_conditional(t, 0, row, subset)))
}

/// Base value `phi_0`: the expectation with no feature known.
pub fn base_value(ensemble: &BoostedEnsemble) -> f64 {
    ensemble
        .trees
        .iter()
        .fold(ensemble.base_margin, |acc, t| acc + tree_expectation(t))
}

/// Exact SHAP values of one row: `(phi_0, phi)`.
pub fn shap_values(ensemble: &BoostedEnsemble, row: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensemble.check_width(row)?;
    let mut phi = vec![0.0; ensemble.n_features];
    for t in &ensemble.trees {
        tree_shap(t, row, &mut phi, Condition::None);
    }
    Ok((base_value(ensemble), phi))
}

fn shapley_weights(m: usize) -> Vec<f64> {
    // w[s] = s! (m - s - 1)! / m!
    let fact: Vec<f64> = (0..=m).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    (0..m).map(|s| fact[s] * fact[m - s - 1] / fact[m]).collect()
}

fn all_subset_values(ensemble: &BoostedEnsemble, row: &[f64]) -> Result<Vec<f64>> {
    let m = ensemble.n_features;
    if m > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::TooManyFeatures(m));
    }
    ensemble.check_width(row)?;
    (0..1usize << m)
        .map(|mask| {
            let subset: Vec<bool> = (0..m).map(|j| mask >> j & 1 == 1).collect();
            conditional_expectation(ensemble, row, &subset)
        })
        .collect()
}

/// Shapley values by enumerating all `2^M` feature subsets. Test oracle only.
pub fn shap_brute_force(ensemble: &BoostedEnsemble, row: &[f64]) -> Result<Vec<f64>> {
    let m = ensemble.n_features;
    let f = all_subset_values(ensemble, row)?;
    let w = shapley_weights(m);
    Ok((0..m)
        .map(|i| {
            (0..1usize << m)
                .filter(|s| s >> i & 1 == 0)
                .map(|s| w[s.count_ones() as usize] * (f[s | 1 << i] - f[s]))
                .sum()
        })
        .collect())
}

/// Pairwise Shapley interaction values by subset enumeration. Test oracle only.
pub fn shap_interactions_brute_force(ensemble: &BoostedEnsemble, row: &[f64]) -> Result<Interactions> {
    let m = ensemble.n_features;
    let f = all_subset_values(ensemble, row)?;
    let phi = shap_brute_force(ensemble, row)?;
    let mut values = vec![0.0; m * m];
    if m >= 2 {
        // weight for |S| = s among the M - 2 other features: s! (M - s - 2)! / (2 (M - 1)!)
        let w: Vec<f64> = shapley_weights(m - 1).into_iter().map(|v| v / 2.0).collect();
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                values[i * m + j] = (0..1usize << m)
                    .filter(|s| s >> i & 1 == 0 && s >> j & 1 == 0)
                    .map(|s| {
                        let d = f[s | 1 << i | 1 << j] - f[s | 1 << i] - f[s | 1 << j] + f[s];
                        w[s.count_ones() as usize] * d
                    })
                    .sum();
            }
        }
    }
    Ok(Interactions::from_off_diagonal(phi, values))
}

/// Per-row interaction matrix `Phi` (M x M, row-major) with main effects on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interactions {
    pub n_features: usize,
    pub phi: Vec<f64>,
    pub values: Vec<f64>,
}

impl Interactions {
    fn from_off_diagonal(phi: Vec<f64>, mut values: Vec<f64>) -> Self {
        let m = phi.len();
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| values[i * m + j]).sum();
            values[i * m + i] = phi[i] - off;
        }
        Self {
            n_features: m,
            phi,
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.n_features;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// SHAP interaction values of one row.
///
/// `Phi[i][j] = (phi_i with j known - phi_i with j unknown) / 2` for `i != j`;
/// the diagonal is `phi_i - sum_{j != i} Phi[i][j]`, so each row sums to `phi_i`.
pub fn shap_interactions(ensemble: &BoostedEnsemble, row: &[f64]) -> Result<Interactions> {
    let (_, phi) = shap_values(ensemble, row)?;
    let m = ensemble.n_features;
    let mut values = vec![0.0; m * m];
    let mut on = vec![0.0; m];
    let mut off = vec![0.0; m];
    for t in &ensemble.trees {
        let mut used: Vec<usize> = t.nodes().iter().filter_map(|n| n.feature).collect();
        used.sort_unstable();
        used.dedup();
        for &j in &used {
            on.iter_mut().for_each(|v| *v = 0.0);
            off.iter_mut().for_each(|v| *v = 0.0);
            tree_shap(t, row, &mut on, Condition::On(j));
            tree_shap(t, row, &mut off, Condition::Off(j));
            for i in 0..m {
                if i != j {
                    values[i * m + j] += 0.5 * (on[i] - off[i]);
                }
            }
        }
    }
    Ok(Interactions::from_off_diagonal(phi, values))
}

/// SHAP values for many rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub base_value: f64,
    pub feature_names: Vec<String>,
    pub row_keys: Vec<String>,
    /// Row-major `n_rows x M`.
    pub values: Vec<f64>,
}

impl ShapMatrix {
    pub fn compute(
        ensemble: &BoostedEnsemble,
        x: &Matrix,
        row_keys: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let m = ensemble.n_features;
        if feature_names.len() != m {
            return Err(Error::WidthMismatch {
                expected: m,
                got: feature_names.len(),
            });
        }
        if row_keys.len() != x.n_rows() {
            return Err(Error::InvalidInput("one row key per row required".into()));
        }
        if x.n_rows() > 0 && x.n_cols() != m {
            return Err(Error::WidthMismatch {
                expected: m,
                got: x.n_cols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| shap_values(ensemble, x.row(i)).map(|(_, phi)| phi))
            .collect::<Result<_>>()?;
        Ok(Self {
            base_value: base_value(ensemble),
            feature_names,
            row_keys,
            values: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    /// `phi_0 + sum_i phi_i`, which equals the model margin.
    pub fn reconstructed_margin(&self, i: usize) -> f64 {
        self.row(i).iter().fold(self.base_value, |a, v| a + v)
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Header: `row_key`, one column per feature, `base_value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row_key".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("base_value".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_keys[i].clone()];
            rec.extend(self.row(i).iter().map(f64::to_string));
            rec.push(self.base_value.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("shap matrix", e))?;
        Ok(())
    }
}

/// Writes one interaction matrix with feature names on both axes.
pub fn write_interactions_csv<W: std::io::Write>(
    inter: &Interactions,
    feature_names: &[String],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["feature".to_string()];
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in feature_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(inter.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("interaction matrix", e))?;
    Ok(())
}
