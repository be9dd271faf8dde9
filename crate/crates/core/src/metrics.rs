//! Ranking metrics used for model selection and subsample comparison.
//!
//! AUROC uses the rank-sum (Mann-Whitney) formulation with ties counted as
//! one half. AUPRC is the step-wise, non-interpolated area
//! `sum_k (R_k - R_{k-1}) * P_k`, sweeping thresholds from the highest score
//! down and treating tied scores as a single group.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::numeric::{midranks, pearson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub n: usize,
    pub positives: usize,
}

impl MetricReport {
    pub fn evaluate(labels: &[u8], scores: &[f64]) -> Result<Self> {
        Ok(Self {
            auroc: auroc(labels, scores)?,
            auprc: auprc(labels, scores)?,
            n: labels.len(),
            positives: labels.iter().filter(|&&y| y == 1).count(),
        })
    }
}

fn check_lengths(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    Ok(())
}

/// Area under the ROC curve.
pub fn auroc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve (step-wise, ties grouped).
pub fn auprc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(Error::Empty("no positive labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    /// `None` when either argument has zero rank variance.
    pub rho: Option<f64>,
    /// Two-sided p-value from the t approximation with `n - 2` degrees of freedom.
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<SpearmanResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("spearman arguments differ in length".into()));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("spearman needs n >= 3, got {n}")));
    }
    let rho = pearson(&midranks(a), &midranks(b));
    let p_value = rho.map(|r| t_approx_p(r, n));
    Ok(SpearmanResult { rho, p_value, n })
}

fn t_approx_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Exact two-sided permutation p-value for Spearman's rho, `n <= 10`.
///
/// Counts permutations of `b`'s ranks whose |rho| is at least the observed one.
pub fn spearman_exact_p(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    let n = a.len();
    if n > 10 {
        return Err(Error::InvalidInput(format!(
            "exact permutation p-value limited to n <= 10, got {n}"
        )));
    }
    let observed = match spearman(a, b)?.rho {
        Some(r) => r.abs(),
        None => return Ok(None),
    };
    let ra = midranks(a);
    let mut rb = midranks(b);
    let mut extreme = 0u64;
    let mut total = 0u64;
    permute(&mut rb, 0, &mut |perm| {
        total += 1;
        if let Some(r) = pearson(&ra, perm) {
            if r.abs() >= observed - 1e-12 {
                extreme += 1;
            }
        }
    });
    Ok(Some(extreme as f64 / total as f64))
}

fn permute(v: &mut [f64], k: usize, visit: &mut impl FnMut(&[f64])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_auroc(labels: &[u8], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_perfect_and_tied() {
        assert_eq!(auroc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auroc(&[0, 1, 0, 1], &[0.3; 4]).unwrap(), 0.5);
    }

    #[test]
    fn auroc_four_pair_example() {
        let labels = [1, 0, 1, 0];
        let scores = [0.9, 0.8, 0.7, 0.1];
        assert_eq!(brute_auroc(&labels, &scores), 0.75);
        assert!((auroc(&labels, &scores).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auroc_rejects_single_class() {
        assert!(matches!(auroc(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClass)));
    }

    #[test]
    fn auprc_three_row_sweep() {
        let v = auprc(&[1, 0, 1], &[0.9, 0.5, 0.1]).unwrap();
        assert!((v - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(auprc(&[1, 1, 0], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        assert!(auprc(&[0, 0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn auprc_tie_group_uses_group_precision() {
        // All tied: one group, precision = prevalence, recall jumps to 1.
        let v = auprc(&[1, 0, 0, 1], &[0.5; 4]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spearman_examples() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r.rho.unwrap() - 0.8).abs() < 1e-12);
        // Frozen from scipy.stats.spearmanr on the same input.
        assert!((r.p_value.unwrap() - 0.104_088_038_661_827_88).abs() < 1e-9);

        let a = [1.0, 5.0, 2.0, 8.0];
        assert!((spearman(&a, &a).unwrap().rho.unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((spearman(&a, &neg).unwrap().rho.unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_zero_variance_is_undefined() {
        let r = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.rho.is_none() && r.p_value.is_none());
    }

    #[test]
    fn exact_p_for_perfect_order() {
        // Only the identity and the reversal reach |rho| = 1: 2 / 5!.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let p = spearman_exact_p(&a, &a).unwrap().unwrap();
        assert!((p - 2.0 / 120.0).abs() < 1e-15);
    }
}
