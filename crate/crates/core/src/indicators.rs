//! Academic-resilience label sets.
//!
//! * SAR1: bottom-two SES quintile students at or above level 2 in all three subjects.
//! * SAR3: SAR1 students in schools whose score/SES correlation is at or above the median.
//! * SAR2: bottom-two SES quintile students whose multilevel-model probability of
//!   reaching level 2 is in the top two quintiles of the full sample.
//! * SAR4: SAR2 students outside the schools with top-quintile random intercepts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{assign_quintiles, FeatureTable};
use crate::error::{Error, Result};
use crate::multilevel::{fit_3level_logit, school_means, MultilevelFit, MultilevelOptions};
use crate::numeric::{median, pearson};

/// Lower score bound of proficiency level 2 per subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level2Cutoffs {
    pub math: f64,
    pub reading: f64,
    pub science: f64,
}

const DEFAULT_CUTOFFS_JSON: &str = include_str!("../config/level2_cutoffs.json");

impl Default for Level2Cutoffs {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CUTOFFS_JSON).expect("bundled cutoffs are valid")
    }
}

impl Level2Cutoffs {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.math, self.reading, self.science].iter().all(|c| *c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("level-2 cutoffs must be finite and positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub math: f64,
    pub reading: f64,
    pub science: f64,
}

impl ScoreTriple {
    pub fn is_complete(&self) -> bool {
        self.math.is_finite() && self.reading.is_finite() && self.science.is_finite()
    }

    pub fn average(&self) -> f64 {
        (self.math + self.reading + self.science) / 3.0
    }
}

/// At or above level 2 in all three subjects; `None` when a score is missing.
pub fn composite_level2(scores: &ScoreTriple, cutoffs: &Level2Cutoffs) -> Option<bool> {
    scores.is_complete().then(|| {
        scores.math >= cutoffs.math && scores.reading >= cutoffs.reading && scores.science >= cutoffs.science
    })
}

/// Names of the auxiliary columns holding SES and the three scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorColumns {
    pub ses: String,
    pub math: String,
    pub reading: String,
    pub science: String,
}

impl Default for IndicatorColumns {
    fn default() -> Self {
        Self {
            ses: "escs".into(),
            math: "pv_math".into(),
            reading: "pv_read".into(),
            science: "pv_scie".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorOptions {
    pub cutoffs: Level2Cutoffs,
    pub columns: IndicatorColumns,
    /// Use the table's sampling weights when forming SES and probability quintiles.
    pub weighted_quintiles: bool,
    /// Compare each school's correlation with its country's median instead of the pooled median.
    pub per_country_rho: bool,
    pub multilevel: MultilevelOptions,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        Self {
            cutoffs: Level2Cutoffs::default(),
            columns: IndicatorColumns::default(),
            weighted_quintiles: false,
            per_country_rho: false,
            multilevel: MultilevelOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchoolRho {
    /// Pearson correlation; `0.0` for degenerate schools.
    pub rho: f64,
    pub degenerate: bool,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolInequality {
    pub schools: BTreeMap<String, SchoolRho>,
    /// Median correlation over non-degenerate schools.
    pub median: f64,
    /// Per-country medians, present when requested.
    pub country_medians: Option<BTreeMap<String, f64>>,
    pub school_country: BTreeMap<String, String>,
}

impl SchoolInequality {
    pub fn threshold_for(&self, school: &str) -> f64 {
        match &self.country_medians {
            Some(m) => self
                .school_country
                .get(school)
                .and_then(|c| m.get(c))
                .copied()
                .unwrap_or(self.median),
            None => self.median,
        }
    }

    /// School at or above its reference median ("more unequal half").
    pub fn is_unequal(&self, school: &str) -> bool {
        self.schools
            .get(school)
            .is_some_and(|s| s.rho >= self.threshold_for(school))
    }
}

/// Within-school Pearson correlation of average score with SES.
///
/// Rows with a missing score or SES are skipped. Schools with fewer than two
/// usable rows or zero variance in either variable are flagged degenerate,
/// get `rho = 0` and are left out of the median.
pub fn school_ses_correlation(
    school_ids: &[String],
    country_ids: &[String],
    scores: &[ScoreTriple],
    ses: &[f64],
    per_country: bool,
) -> Result<SchoolInequality> {
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut school_country = BTreeMap::new();
    for i in 0..school_ids.len() {
        school_country
            .entry(school_ids[i].clone())
            .or_insert_with(|| country_ids[i].clone());
        let g = groups.entry(&school_ids[i]).or_default();
        if scores[i].is_complete() && ses[i].is_finite() {
            g.0.push(scores[i].average());
            g.1.push(ses[i]);
        }
    }
    let schools: BTreeMap<String, SchoolRho> = groups
        .into_iter()
        .map(|(s, (y, x))| {
            let r = pearson(&y, &x);
            (
                s.to_string(),
                SchoolRho {
                    rho: r.unwrap_or(0.0),
                    degenerate: r.is_none(),
                    n: y.len(),
                },
            )
        })
        .collect();
    let defined: Vec<f64> = schools.values().filter(|s| !s.degenerate).map(|s| s.rho).collect();
    let median = median(&defined).ok_or(Error::Empty("no school with a defined correlation"))?;
    let country_medians = per_country.then(|| {
        let mut by_country: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (s, r) in &schools {
            if !r.degenerate {
                by_country.entry(school_country[s].clone()).or_default().push(r.rho);
            }
        }
        by_country
            .into_iter()
            .filter_map(|(c, v)| crate::numeric::median(&v).map(|m| (c, m)))
            .collect()
    });
    Ok(SchoolInequality {
        schools,
        median,
        country_medians,
        school_country,
    })
}

/// Rows dropped before labelling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub missing_ses: usize,
    pub missing_scores: usize,
}

/// SAR labels over a table. Per-row vectors are aligned with the table;
/// labels are `None` outside the working sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarLabelSet {
    pub included: Vec<bool>,
    pub working: Vec<bool>,
    /// SES quintile (0 for excluded rows).
    pub ses_quintile: Vec<u8>,
    pub sar1: Vec<Option<bool>>,
    pub sar2: Vec<Option<bool>>,
    pub sar3: Vec<Option<bool>>,
    pub sar4: Vec<Option<bool>>,
    /// Multilevel predicted probability (NaN for excluded rows).
    pub yhat: Vec<f64>,
    pub yhat_quintile: Vec<u8>,
    pub school_rho: Vec<f64>,
    pub intercept_quintiles: BTreeMap<String, u8>,
    pub exclusions: ExclusionReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Sar {
    Sar1,
    Sar2,
    Sar3,
    Sar4,
}

impl Sar {
    pub const ALL: [Sar; 4] = [Sar::Sar1, Sar::Sar2, Sar::Sar3, Sar::Sar4];

    pub fn name(self) -> &'static str {
        match self {
            Sar::Sar1 => "SAR1",
            Sar::Sar2 => "SAR2",
            Sar::Sar3 => "SAR3",
            Sar::Sar4 => "SAR4",
        }
    }

    pub fn parse(s: &str) -> Option<Sar> {
        Sar::ALL.into_iter().find(|x| x.name().eq_ignore_ascii_case(s))
    }
}

impl SarLabelSet {
    pub fn labels(&self, which: Sar) -> &[Option<bool>] {
        match which {
            Sar::Sar1 => &self.sar1,
            Sar::Sar2 => &self.sar2,
            Sar::Sar3 => &self.sar3,
            Sar::Sar4 => &self.sar4,
        }
    }

    pub fn working_indices(&self) -> Vec<usize> {
        (0..self.working.len()).filter(|&i| self.working[i]).collect()
    }

    /// Labels of the working-sample rows, in row order.
    pub fn working_labels(&self, which: Sar) -> Vec<u8> {
        self.labels(which)
            .iter()
            .zip(&self.working)
            .filter(|(_, &w)| w)
            .map(|(l, _)| u8::from(l.unwrap_or(false)))
            .collect()
    }

    pub fn rate(&self, which: Sar, mask: impl Fn(usize) -> bool) -> Option<f64> {
        let (mut pos, mut n) = (0usize, 0usize);
        for (i, l) in self.labels(which).iter().enumerate() {
            if let Some(l) = l {
                if mask(i) {
                    n += 1;
                    pos += usize::from(*l);
                }
            }
        }
        (n > 0).then(|| pos as f64 / n as f64)
    }
}

pub fn scores_from_table(table: &FeatureTable, cols: &IndicatorColumns) -> Result<Vec<ScoreTriple>> {
    let m = table.require_aux(&cols.math)?;
    let r = table.require_aux(&cols.reading)?;
    let s = table.require_aux(&cols.science)?;
    Ok((0..table.n_rows())
        .map(|i| ScoreTriple {
            math: m[i],
            reading: r[i],
            science: s[i],
        })
        .collect())
}

/// SES quintiles over included rows and SAR1 within the bottom two.
pub fn build_sar1(
    scores: &[ScoreTriple],
    ses: &[f64],
    weights: &[f64],
    cutoffs: &Level2Cutoffs,
) -> Result<(Vec<bool>, Vec<u8>, Vec<Option<bool>>, ExclusionReport)> {
    let n = scores.len();
    let mut ex = ExclusionReport::default();
    let included: Vec<bool> = (0..n)
        .map(|i| {
            let ses_ok = ses[i].is_finite();
            let scores_ok = scores[i].is_complete();
            if !ses_ok {
                ex.missing_ses += 1;
            } else if !scores_ok {
                ex.missing_scores += 1;
            }
            ses_ok && scores_ok
        })
        .collect();
    let idx: Vec<usize> = (0..n).filter(|&i| included[i]).collect();
    if idx.is_empty() {
        return Err(Error::Empty("no rows with complete SES and scores"));
    }
    let q = assign_quintiles(
        &idx.iter().map(|&i| ses[i]).collect::<Vec<_>>(),
        &idx.iter().map(|&i| weights[i]).collect::<Vec<_>>(),
    )?;
    let mut quintile = vec![0u8; n];
    for (&i, &qi) in idx.iter().zip(&q) {
        quintile[i] = qi;
    }
    let working: Vec<bool> = quintile.iter().map(|&q| q == 1 || q == 2).collect();
    if !working.iter().any(|&w| w) {
        return Err(Error::Empty("working sample"));
    }
    let sar1 = (0..n)
        .map(|i| working[i].then(|| composite_level2(&scores[i], cutoffs).unwrap_or(false)))
        .collect();
    Ok((working, quintile, sar1, ex))
}

/// SAR3 = SAR1 and the school's correlation at or above the reference median.
pub fn build_sar3(sar1: &[Option<bool>], school_ids: &[String], inequality: &SchoolInequality) -> Vec<Option<bool>> {
    sar1.iter()
        .zip(school_ids)
        .map(|(l, s)| l.map(|v| v && inequality.is_unequal(s)))
        .collect()
}

/// Predicted probabilities for every included row, their quintiles over the
/// included rows and SAR2 for the working sample.
pub fn build_sar2(
    fit: &MultilevelFit,
    ses: &[f64],
    school_ids: &[String],
    country_ids: &[String],
    included: &[bool],
    working: &[bool],
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<u8>, Vec<Option<bool>>)> {
    let n = ses.len();
    for (i, s) in school_ids.iter().enumerate() {
        if included[i] && !fit.school_intercepts.contains_key(s) {
            return Err(Error::InvalidInput(format!("school `{s}` absent from multilevel fit")));
        }
    }
    let yhat: Vec<f64> = (0..n)
        .map(|i| {
            if included[i] {
                fit.predict_probability(ses[i], &school_ids[i], &country_ids[i])
            } else {
                f64::NAN
            }
        })
        .collect();
    let idx: Vec<usize> = (0..n).filter(|&i| included[i]).collect();
    let q = assign_quintiles(
        &idx.iter().map(|&i| yhat[i]).collect::<Vec<_>>(),
        &idx.iter().map(|&i| weights[i]).collect::<Vec<_>>(),
    )?;
    let mut yq = vec![0u8; n];
    for (&i, &qi) in idx.iter().zip(&q) {
        yq[i] = qi;
    }
    let sar2 = (0..n).map(|i| working[i].then_some(yq[i] >= 4)).collect();
    Ok((yhat, yq, sar2))
}

/// SAR4 = SAR2 and the school's intercept outside the top quintile.
pub fn build_sar4(
    sar2: &[Option<bool>],
    school_ids: &[String],
    intercept_quintiles: &BTreeMap<String, u8>,
) -> Vec<Option<bool>> {
    sar2.iter()
        .zip(school_ids)
        .map(|(l, s)| l.map(|v| v && intercept_quintiles.get(s).copied().unwrap_or(0) != 5))
        .collect()
}

pub struct IndicatorResult {
    pub labels: SarLabelSet,
    pub inequality: SchoolInequality,
    pub fit: MultilevelFit,
}

/// Builds all four label sets from a table carrying SES and score columns.
///
/// The multilevel model is fitted on every included row (all SES quintiles).
pub fn build_indicators(table: &FeatureTable, options: &IndicatorOptions) -> Result<IndicatorResult> {
    options.cutoffs.validate()?;
    let ses = table.require_aux(&options.columns.ses)?;
    let scores = scores_from_table(table, &options.columns)?;
    let weights: Vec<f64> = if options.weighted_quintiles {
        table.weights().to_vec()
    } else {
        vec![1.0; table.n_rows()]
    };
    let (working, ses_quintile, sar1, exclusions) = build_sar1(&scores, ses, &weights, &options.cutoffs)?;
    let included: Vec<bool> = ses_quintile.iter().map(|&q| q > 0).collect();

    let inequality = school_ses_correlation(
        table.school_ids(),
        table.country_ids(),
        &scores,
        ses,
        options.per_country_rho,
    )?;
    let sar3 = build_sar3(&sar1, table.school_ids(), &inequality);

    let idx: Vec<usize> = (0..table.n_rows()).filter(|&i| included[i]).collect();
    let y: Vec<u8> = idx
        .iter()
        .map(|&i| u8::from(composite_level2(&scores[i], &options.cutoffs).unwrap_or(false)))
        .collect();
    let fit_ses: Vec<f64> = idx.iter().map(|&i| ses[i]).collect();
    let fit_schools: Vec<String> = idx.iter().map(|&i| table.school_ids()[i].clone()).collect();
    let fit_countries: Vec<String> = idx.iter().map(|&i| table.country_ids()[i].clone()).collect();
    let means = school_means(&fit_ses, &fit_schools);
    let fit = fit_3level_logit(&y, &fit_ses, &means, &fit_schools, &fit_countries, &options.multilevel)?;

    let (yhat, yhat_quintile, sar2) = build_sar2(
        &fit,
        ses,
        table.school_ids(),
        table.country_ids(),
        &included,
        &working,
        &weights,
    )?;
    let intercept_quintiles = fit.intercept_quintiles();
    let sar4 = build_sar4(&sar2, table.school_ids(), &intercept_quintiles);
    let school_rho = table
        .school_ids()
        .iter()
        .map(|s| inequality.schools.get(s).map_or(f64::NAN, |r| r.rho))
        .collect();

    Ok(IndicatorResult {
        labels: SarLabelSet {
            included,
            working,
            ses_quintile,
            sar1,
            sar2,
            sar3,
            sar4,
            yhat,
            yhat_quintile,
            school_rho,
            intercept_quintiles,
            exclusions,
        },
        inequality,
        fit,
    })
}

/// Per-student indicator report for the working sample.
pub fn write_indicator_report<W: Write>(table: &FeatureTable, labels: &SarLabelSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "student_id", "school_id", "country_id", "ses_quintile", "yhat", "yhat_quintile", "rho_school", "SAR1",
        "SAR2", "SAR3", "SAR4",
    ])?;
    let flag = |l: Option<bool>| u8::from(l.unwrap_or(false)).to_string();
    for i in labels.working_indices() {
        w.write_record([
            table.student_ids()[i].clone(),
            table.school_ids()[i].clone(),
            table.country_ids()[i].clone(),
            labels.ses_quintile[i].to_string(),
            labels.yhat[i].to_string(),
            labels.yhat_quintile[i].to_string(),
            labels.school_rho[i].to_string(),
            flag(labels.sar1[i]),
            flag(labels.sar2[i]),
            flag(labels.sar3[i]),
            flag(labels.sar4[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io("indicator report", e))?;
    Ok(())
}

/// Resilience rates for the whole sample and four school sub-systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesTable {
    pub columns: Vec<String>,
    /// One row per indicator, one entry per column.
    pub rates: Vec<(Sar, Vec<Option<f64>>)>,
    pub counts: Vec<usize>,
}

pub const PRIVATE_FEATURE: &str = "SchBKGD_Private";
pub const URBAN_FEATURE: &str = "SchBKGD_Urban";

pub fn rates_table(table: &FeatureTable, labels: &SarLabelSet) -> RatesTable {
    let col = |name: &str| table.schema().index_of(name).map(|c| table.column(c));
    let private = col(PRIVATE_FEATURE);
    let urban = col(URBAN_FEATURE);
    let masks: Vec<(String, Box<dyn Fn(usize) -> bool + '_>)> = vec![
        ("whole_sample".into(), Box::new(|_| true)),
        (
            "school_public".into(),
            Box::new(|i| private.as_ref().is_some_and(|p| p[i] == 0.0)),
        ),
        (
            "school_private".into(),
            Box::new(|i| private.as_ref().is_some_and(|p| p[i] == 1.0)),
        ),
        (
            "school_rural".into(),
            Box::new(|i| urban.as_ref().is_some_and(|p| p[i] == 0.0)),
        ),
        (
            "school_urban".into(),
            Box::new(|i| urban.as_ref().is_some_and(|p| p[i] == 1.0)),
        ),
    ];
    let rates = Sar::ALL
        .iter()
        .map(|&s| (s, masks.iter().map(|(_, m)| labels.rate(s, m)).collect()))
        .collect();
    let counts = masks
        .iter()
        .map(|(_, m)| labels.working_indices().into_iter().filter(|&i| m(i)).count())
        .collect();
    RatesTable {
        columns: masks.into_iter().map(|(n, _)| n).collect(),
        rates,
        counts,
    }
}

impl RatesTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["indicator".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (sar, row) in &self.rates {
            let mut rec = vec![sar.name().to_string()];
            rec.extend(row.iter().map(|r| r.map_or("NA".into(), |v| format!("{v:.3}"))));
            w.write_record(&rec)?;
        }
        let mut rec = vec!["N".to_string()];
        rec.extend(self.counts.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
        w.flush().map_err(|e| Error::io("rates table", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(m: f64, r: f64, s: f64) -> ScoreTriple {
        ScoreTriple {
            math: m,
            reading: r,
            science: s,
        }
    }

    #[test]
    fn composite_boundaries() {
        let c = Level2Cutoffs {
            math: 400.0,
            reading: 410.0,
            science: 420.0,
        };
        assert_eq!(composite_level2(&st(400.0, 410.0, 420.0), &c), Some(true));
        assert_eq!(composite_level2(&st(399.9, 500.0, 500.0), &c), Some(false));
        assert_eq!(composite_level2(&st(100.0, 100.0, 100.0), &c), Some(false));
        assert_eq!(composite_level2(&st(f64::NAN, 500.0, 500.0), &c), None);
    }

    #[test]
    fn default_cutoffs_are_positive() {
        let c = Level2Cutoffs::default();
        c.validate().unwrap();
        assert!(c.math > 400.0 && c.reading > 400.0 && c.science > 400.0);
    }

    #[test]
    fn perfect_linear_school_has_rho_one() {
        let ses = [-1.0, 0.0, 1.0, 2.0];
        let scores: Vec<ScoreTriple> = ses.iter().map(|x| { let y = 2.0 * x + 1.0; st(y, y, y) }).collect();
        let ids = vec!["A".to_string(); 4];
        let c = vec!["C".to_string(); 4];
        let ineq = school_ses_correlation(&ids, &c, &scores, &ses, false).unwrap();
        assert!((ineq.schools["A"].rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_school_is_degenerate() {
        let ses = [-1.0, 0.0, 1.0, 0.5, 0.1];
        let scores = vec![
            st(400.0, 400.0, 400.0),
            st(400.0, 400.0, 400.0),
            st(400.0, 400.0, 400.0),
            st(300.0, 300.0, 300.0),
            st(500.0, 500.0, 500.0),
        ];
        let ids: Vec<String> = ["A", "A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
        let c = vec!["C".to_string(); 5];
        let ineq = school_ses_correlation(&ids, &c, &scores, &ses, false).unwrap();
        assert!(ineq.schools["A"].degenerate);
        assert_eq!(ineq.schools["A"].rho, 0.0);
        // median taken over B alone
        assert_eq!(ineq.median, ineq.schools["B"].rho);
    }

    #[test]
    fn four_student_school_matches_pearson_formula() {
        let ses = [-1.0, 0.0, 1.0, 2.0];
        let avg = [400.0, 420.0, 410.0, 450.0];
        // direct formula: sum dx dy / sqrt(sum dx^2 sum dy^2)
        let mx = 0.5;
        let my = 420.0;
        let sxy: f64 = ses.iter().zip(&avg).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = ses.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: f64 = avg.iter().map(|y| (y - my) * (y - my)).sum();
        let expected = sxy / (sxx * syy).sqrt();
        assert!((expected - 0.836_660_026_534_075_6).abs() < 1e-12);
        let scores: Vec<ScoreTriple> = avg.iter().map(|&y| st(y, y, y)).collect();
        let ids = vec!["A".to_string(); 4];
        let c = vec!["C".to_string(); 4];
        let ineq = school_ses_correlation(&ids, &c, &scores, &ses, false).unwrap();
        assert!((ineq.schools["A"].rho - expected).abs() < 1e-12);
    }

    #[test]
    fn sar3_requires_unequal_school() {
        let mut schools = BTreeMap::new();
        schools.insert("lo".to_string(), SchoolRho { rho: 0.1, degenerate: false, n: 5 });
        schools.insert("hi".to_string(), SchoolRho { rho: 0.5, degenerate: false, n: 5 });
        let ineq = SchoolInequality {
            schools,
            median: 0.3,
            country_medians: None,
            school_country: BTreeMap::new(),
        };
        let sar1 = vec![Some(true), Some(true), None];
        let ids: Vec<String> = ["lo", "hi", "hi"].iter().map(|s| s.to_string()).collect();
        assert_eq!(build_sar3(&sar1, &ids, &ineq), vec![Some(false), Some(true), None]);
    }

    #[test]
    fn sar1_excludes_upper_quintiles() {
        let ses: Vec<f64> = (0..10).map(f64::from).collect();
        let scores = vec![st(500.0, 500.0, 500.0); 10];
        let (working, q, sar1, _) = build_sar1(&scores, &ses, &[1.0; 10], &Level2Cutoffs::default()).unwrap();
        assert_eq!(q, vec![1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        assert_eq!(working.iter().filter(|&&w| w).count(), 4);
        assert_eq!(sar1[5], None);
        assert_eq!(sar1[0], Some(true));
    }

    #[test]
    fn sar4_drops_top_intercept_schools() {
        let sar2 = vec![Some(true), Some(true), Some(false)];
        let ids: Vec<String> = ["a", "b", "a"].iter().map(|s| s.to_string()).collect();
        let q: BTreeMap<String, u8> = [("a".to_string(), 5), ("b".to_string(), 2)].into();
        assert_eq!(build_sar4(&sar2, &ids, &q), vec![Some(false), Some(true), Some(false)]);
    }
}
