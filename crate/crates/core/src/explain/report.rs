use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ShapMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{spearman, SpearmanResult};
use crate::numeric::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub index: usize,
    pub mean_abs_shap: f64,
}

/// Features ordered by mean |SHAP|, descending; ties keep declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceRanking {
    pub fn top(&self, n: usize) -> &[ImportanceEntry] {
        &self.entries[..n.min(self.entries.len())]
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, top_n: Option<usize>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature", "mean_abs_shap"])?;
        let entries = top_n.map_or(&self.entries[..], |n| self.top(n));
        for (k, e) in entries.iter().enumerate() {
            w.write_record([(k + 1).to_string(), e.feature.clone(), e.mean_abs_shap.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("importance ranking", e))?;
        Ok(())
    }
}

pub fn global_importance(shap: &ShapMatrix) -> Result<ImportanceRanking> {
    if shap.n_rows() == 0 {
        return Err(Error::Empty("SHAP matrix"));
    }
    let n = shap.n_rows() as f64;
    let mut entries: Vec<ImportanceEntry> = shap
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, f)| ImportanceEntry {
            feature: f.clone(),
            index: j,
            mean_abs_shap: (0..shap.n_rows()).map(|i| shap.get(i, j).abs()).sum::<f64>() / n,
        })
        .collect();
    entries.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    Ok(ImportanceRanking { entries })
}

/// One point of a beeswarm plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRecord {
    pub row_key: String,
    pub feature: String,
    pub shap: f64,
    /// Raw covariate value; `None` when missing.
    pub value: Option<f64>,
    /// Min-max normalized value in `[0, 1]`; 0.5 for constant features; `None` when missing.
    pub color: Option<f64>,
    pub missing: bool,
    pub jitter_seed: u64,
}

/// Beeswarm records for the named features, feature-major.
pub fn beeswarm_export(shap: &ShapMatrix, x: &Matrix, features: &[String]) -> Result<Vec<BeeswarmRecord>> {
    if x.n_rows() != shap.n_rows() {
        return Err(Error::InvalidInput("SHAP matrix and feature matrix differ in rows".into()));
    }
    let mut out = Vec::with_capacity(features.len() * x.n_rows());
    for name in features {
        let j = shap.feature_index(name)?;
        let col = x.column(j);
        let (lo, hi) = col
            .iter()
            .filter(|v| !v.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        for (i, &v) in col.iter().enumerate() {
            let missing = v.is_nan();
            let color = (!missing).then(|| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 });
            out.push(BeeswarmRecord {
                row_key: shap.row_keys[i].clone(),
                feature: name.clone(),
                shap: shap.get(i, j),
                value: (!missing).then_some(v),
                color,
                missing,
                jitter_seed: mix_seed(i as u64, j as u64),
            });
        }
    }
    Ok(out)
}

pub fn write_beeswarm_csv<W: Write>(records: &[BeeswarmRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("beeswarm", e))?;
    Ok(())
}

pub fn read_beeswarm_csv<R: Read>(input: R) -> Result<Vec<BeeswarmRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub shap: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub row: usize,
    pub row_key: String,
    /// Sum of the row's SHAP values (margin minus base value).
    pub total: f64,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalProfiles {
    pub max: Profile,
    pub min: Profile,
}

/// The rows with the largest and smallest total SHAP, with their top-k features by |SHAP|.
pub fn local_profiles(shap: &ShapMatrix, x: &Matrix, top_k: usize) -> Result<LocalProfiles> {
    if shap.n_rows() == 0 {
        return Err(Error::Empty("SHAP matrix"));
    }
    let totals: Vec<f64> = (0..shap.n_rows()).map(|i| shap.row(i).iter().sum()).collect();
    let (mut imax, mut imin) = (0, 0);
    for (i, &t) in totals.iter().enumerate() {
        if t > totals[imax] {
            imax = i;
        }
        if t < totals[imin] {
            imin = i;
        }
    }
    let profile = |i: usize| {
        let mut order: Vec<usize> = (0..shap.n_features()).collect();
        order.sort_by(|&a, &b| shap.get(i, b).abs().total_cmp(&shap.get(i, a).abs()));
        Profile {
            row: i,
            row_key: shap.row_keys[i].clone(),
            total: totals[i],
            contributions: order
                .into_iter()
                .take(top_k)
                .map(|j| Contribution {
                    feature: shap.feature_names[j].clone(),
                    shap: shap.get(i, j),
                    value: Some(x.get(i, j)).filter(|v| !v.is_nan()),
                })
                .collect(),
        }
    };
    Ok(LocalProfiles {
        max: profile(imax),
        min: profile(imin),
    })
}

impl LocalProfiles {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["profile", "row_key", "total", "feature", "shap", "value"])?;
        for (label, p) in [("max", &self.max), ("min", &self.min)] {
            for c in &p.contributions {
                w.write_record([
                    label.to_string(),
                    p.row_key.clone(),
                    p.total.to_string(),
                    c.feature.clone(),
                    c.shap.to_string(),
                    c.value.map_or(String::new(), |v| v.to_string()),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("local profiles", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub feature: String,
    pub importance_a: f64,
    pub importance_b: f64,
    pub rank_a: usize,
    pub rank_b: usize,
}

/// Features present in the top-n of both rankings, with their importances
/// and the Spearman correlation between the two arms over that overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedImportance {
    pub label_a: String,
    pub label_b: String,
    pub top_n: usize,
    /// Ordered by arm A's rank.
    pub rows: Vec<PairedRow>,
    pub spearman: SpearmanResult,
}

pub fn paired_importance(
    a: &ImportanceRanking,
    b: &ImportanceRanking,
    label_a: &str,
    label_b: &str,
    top_n: usize,
) -> Result<PairedImportance> {
    let top_b = b.top(top_n);
    let rows: Vec<PairedRow> = a
        .top(top_n)
        .iter()
        .enumerate()
        .filter_map(|(ra, ea)| {
            top_b.iter().position(|eb| eb.feature == ea.feature).map(|rb| PairedRow {
                feature: ea.feature.clone(),
                importance_a: ea.mean_abs_shap,
                importance_b: top_b[rb].mean_abs_shap,
                rank_a: ra + 1,
                rank_b: rb + 1,
            })
        })
        .collect();
    let xa: Vec<f64> = rows.iter().map(|r| r.importance_a).collect();
    let xb: Vec<f64> = rows.iter().map(|r| r.importance_b).collect();
    Ok(PairedImportance {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        top_n,
        spearman: if rows.len() >= 3 {
            spearman(&xa, &xb)?
        } else {
            SpearmanResult {
                rho: None,
                p_value: None,
                n: rows.len(),
            }
        },
        rows,
    })
}

impl PairedImportance {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "feature".to_string(),
            format!("importance_{}", self.label_a),
            format!("importance_{}", self.label_b),
            format!("rank_{}", self.label_a),
            format!("rank_{}", self.label_b),
        ])?;
        for r in &self.rows {
            w.write_record([
                r.feature.clone(),
                r.importance_a.to_string(),
                r.importance_b.to_string(),
                r.rank_a.to_string(),
                r.rank_b.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("paired importance", e))?;
        Ok(())
    }
}
