use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::table::FeatureTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Significance {
    None,
    /// p <= 0.10
    One,
    /// p <= 0.05
    Two,
    /// p <= 0.01
    Three,
}

impl Significance {
    pub fn from_p(p: Option<f64>) -> Self {
        match p {
            Some(p) if p <= 0.01 => Significance::Three,
            Some(p) if p <= 0.05 => Significance::Two,
            Some(p) if p <= 0.10 => Significance::One,
            _ => Significance::None,
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Significance::None => "",
            Significance::One => "*",
            Significance::Two => "**",
            Significance::Three => "***",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSummary {
    pub feature: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    /// `mean_b - mean_a`.
    pub difference: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    pub significance: Significance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub covariates: Vec<CovariateSummary>,
}

impl GroupSummary {
    /// One row per covariate; group A is the reference, `difference = B - A`.
    pub fn write_csv<W: std::io::Write>(&self, label_a: &str, label_b: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "feature".to_string(),
            format!("n_{label_a}"),
            format!("n_{label_b}"),
            format!("mean_{label_a}"),
            format!("mean_{label_b}"),
            "difference".into(),
            "t".into(),
            "df".into(),
            "p_value".into(),
            "significance".into(),
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for c in &self.covariates {
            w.write_record([
                c.feature.clone(),
                c.n_a.to_string(),
                c.n_b.to_string(),
                opt(c.mean_a),
                opt(c.mean_b),
                opt(c.difference),
                opt(c.t),
                opt(c.df),
                opt(c.p_value),
                c.significance.stars().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("group summary", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch unequal-variance t test of `mean(b) - mean(a)`.
///
/// `None` when either group has fewer than two values or both variances are zero.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (mb - ma) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Some(WelchTest { t, df, p_value })
}

/// Per-covariate group means and Welch tests; group B is `mask == true`.
///
/// Missing cells are dropped covariate by covariate.
pub fn summarize_groups(table: &FeatureTable, group_b: &[bool]) -> Result<GroupSummary> {
    if group_b.len() != table.n_rows() {
        return Err(Error::InvalidInput("group mask length differs from table".into()));
    }
    if !group_b.iter().any(|&g| g) || group_b.iter().all(|&g| g) {
        return Err(Error::Empty("both groups must be nonempty"));
    }
    let covariates = (0..table.n_features())
        .map(|c| {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (r, &in_b) in group_b.iter().enumerate() {
                let v = table.value(r, c);
                if v.is_nan() {
                    continue;
                }
                if in_b {
                    b.push(v)
                } else {
                    a.push(v)
                }
            }
            let mean = |x: &[f64]| (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64);
            let (mean_a, mean_b) = (mean(&a), mean(&b));
            let test = welch_t_test(&a, &b);
            let p_value = test.map(|t| t.p_value);
            CovariateSummary {
                feature: table.schema().get(c).name.clone(),
                n_a: a.len(),
                n_b: b.len(),
                mean_a,
                mean_b,
                difference: mean_a.zip(mean_b).map(|(ma, mb)| mb - ma),
                t: test.map(|t| t.t),
                df: test.map(|t| t.df),
                p_value,
                significance: Significance::from_p(p_value),
            }
        })
        .collect();
    Ok(GroupSummary { covariates })
}
