//! Synthetic three-level survey data with a known data-generating process.
//!
//! Students are nested in schools nested in countries. The binary outcome is
//! drawn through the logistic link of a margin built from student SES, the
//! school-mean SES, school and country random intercepts and optional feature
//! effects. Subject scores are then drawn so that "all three at or above the
//! level-2 cutoff" reproduces the outcome exactly. Every component of the
//! margin is returned in [`LatentRecord`] so estimators can be checked
//! against the truth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schema::{FeatureKind, Schema};
use super::table::FeatureTable;
use crate::error::{Error, Result};
use crate::indicators::Level2Cutoffs;
use crate::numeric::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub countries: usize,
    pub schools_per_country: usize,
    pub students_per_school: usize,
    pub intercept: f64,
    pub beta_ses: f64,
    pub beta_school_ses: f64,
    /// Variance of school random intercepts.
    pub sigma2_school: f64,
    /// Variance of country random intercepts.
    pub sigma2_country: f64,
    /// Coefficient per feature, applied to the standardized feature.
    pub feature_effects: BTreeMap<String, f64>,
    pub nonlinear: bool,
    pub nonlinear_feature: String,
    pub nonlinear_coef: f64,
    pub interaction: bool,
    pub interaction_features: (String, String),
    pub interaction_coef: f64,
    pub country_ses_sd: f64,
    pub school_ses_sd: f64,
    pub student_ses_sd: f64,
    pub country_ses_mean: f64,
    /// Probability that a feature cell is blanked out.
    pub missing_rate: f64,
    pub cutoffs: Level2Cutoffs,
    /// Feature schema; defaults to the full 65-covariate table.
    pub schema: Option<Schema>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            countries: 4,
            schools_per_country: 10,
            students_per_school: 25,
            intercept: 0.0,
            beta_ses: 0.0,
            beta_school_ses: 0.0,
            sigma2_school: 0.0,
            sigma2_country: 0.0,
            feature_effects: BTreeMap::new(),
            nonlinear: false,
            nonlinear_feature: "StudBKGD_Curiosity".into(),
            nonlinear_coef: 0.8,
            interaction: false,
            interaction_features: ("StudBKGD_Gender".into(), "SchBKGD_Private".into()),
            interaction_coef: 1.5,
            country_ses_sd: 0.3,
            school_ses_sd: 0.5,
            student_ses_sd: 0.8,
            country_ses_mean: -0.5,
            missing_rate: 0.0,
            cutoffs: Level2Cutoffs::default(),
            schema: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self, schema: &Schema) -> Result<()> {
        if self.countries == 0 || self.schools_per_country == 0 || self.students_per_school == 0 {
            return Err(Error::Config("group sizes must be positive".into()));
        }
        if !(self.sigma2_school >= 0.0) || !(self.sigma2_country >= 0.0) {
            return Err(Error::Config("variance components must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must be in [0, 1)".into()));
        }
        for name in self.feature_effects.keys() {
            schema.require(name)?;
        }
        if self.nonlinear {
            schema.require(&self.nonlinear_feature)?;
        }
        if self.interaction {
            schema.require(&self.interaction_features.0)?;
            schema.require(&self.interaction_features.1)?;
        }
        Ok(())
    }
}

/// The generating truths behind a synthetic table, row-aligned with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    /// `(school_id, intercept)` in table order of first appearance.
    pub school_intercepts: Vec<(String, f64)>,
    pub country_intercepts: Vec<(String, f64)>,
    pub ses: Vec<f64>,
    pub school_mean_ses: Vec<f64>,
    pub linear_part: Vec<f64>,
    pub nonlinear_part: Vec<f64>,
    pub interaction_part: Vec<f64>,
    /// Full margin per row (logit of the success probability).
    pub margins: Vec<f64>,
    pub outcomes: Vec<u8>,
    /// Column means and standard deviations used to standardize features.
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
}

impl LatentRecord {
    pub fn school_intercept(&self, school: &str) -> Option<f64> {
        self.school_intercepts
            .iter()
            .find(|(s, _)| s == school)
            .map(|(_, u)| *u)
    }
}

pub struct SynthOutput {
    pub table: FeatureTable,
    pub latent: LatentRecord,
}

fn feature_seed(name: &str) -> f64 {
    // stable pseudo-random number in [0, 1) per feature name
    let h = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn is_school_level(name: &str) -> bool {
    name.starts_with("SchBKGD_") || name.starts_with("CovidBKGD_")
}

fn draw_feature(kind: FeatureKind, min: Option<f64>, max: Option<f64>, name: &str, rng: &mut ChaCha8Rng) -> f64 {
    let std_normal = Normal::<f64>::new(0.0, 1.0).expect("valid");
    match kind {
        FeatureKind::Binary => f64::from(u8::from(rng.random::<f64>() < 0.2 + 0.4 * feature_seed(name))),
        FeatureKind::Ordinal => {
            let lo = min.unwrap_or(0.0);
            let hi = max.unwrap_or(lo + 10.0).min(lo + 10.0);
            rng.random_range(lo as i64..=hi as i64) as f64
        }
        FeatureKind::Categorical => 0.0,
        FeatureKind::Continuous => match (min, max) {
            (Some(lo), Some(hi)) => lo + (hi - lo) * rng.random::<f64>(),
            (Some(lo), None) => lo + (1.0 + 9.0 * feature_seed(name)) * std_normal.sample(rng).abs(),
            (None, Some(hi)) => hi - std_normal.sample(rng).abs(),
            (None, None) => std_normal.sample(rng),
        },
    }
}

/// Generates a synthetic table and its latent truths; bitwise reproducible per seed.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    let schema = config.schema.clone().unwrap_or_else(Schema::table_a1);
    config.validate(&schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sd: f64| Normal::new(0.0, sd.max(0.0)).expect("sd >= 0");
    let m = schema.len();

    let mut country_intercepts = Vec::new();
    let mut school_intercepts = Vec::new();
    let (mut students, mut schools, mut countries) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ses = Vec::new();
    let mut school_mean_ses = Vec::new();
    let mut random_part = Vec::new();

    for k in 0..config.countries {
        let country = format!("C{:02}", k + 1);
        let v_k = normal(config.sigma2_country.sqrt()).sample(&mut rng);
        let country_ses = config.country_ses_mean + normal(config.country_ses_sd).sample(&mut rng);
        country_intercepts.push((country.clone(), v_k));
        for j in 0..config.schools_per_country {
            let school = format!("{country}-S{:03}", j + 1);
            let u_j = normal(config.sigma2_school.sqrt()).sample(&mut rng);
            let school_ses = country_ses + normal(config.school_ses_sd).sample(&mut rng);
            school_intercepts.push((school.clone(), u_j));
            let school_values: Vec<f64> = schema
                .features()
                .iter()
                .map(|f| draw_feature(f.kind, f.min, f.max, &f.name, &mut rng))
                .collect();
            let start = ses.len();
            for i in 0..config.students_per_school {
                students.push(format!("{school}-{:04}", i + 1));
                schools.push(school.clone());
                countries.push(country.clone());
                ses.push(school_ses + normal(config.student_ses_sd).sample(&mut rng));
                let row: Vec<f64> = schema
                    .features()
                    .iter()
                    .zip(&school_values)
                    .map(|(f, &sv)| {
                        if is_school_level(&f.name) {
                            sv
                        } else {
                            draw_feature(f.kind, f.min, f.max, &f.name, &mut rng)
                        }
                    })
                    .collect();
                rows.push(row);
                random_part.push(u_j + v_k);
            }
            let mean = ses[start..].iter().sum::<f64>() / config.students_per_school as f64;
            school_mean_ses.extend(std::iter::repeat_n(mean, config.students_per_school));
        }
    }

    let n = rows.len();
    let mut feature_means = vec![0.0; m];
    let mut feature_sds = vec![1.0; m];
    for c in 0..m {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        feature_means[c] = mean;
        feature_sds[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z = |row: &[f64], c: usize| (row[c] - feature_means[c]) / feature_sds[c];

    let effects: Vec<(usize, f64)> = config
        .feature_effects
        .iter()
        .map(|(name, &b)| (schema.index_of(name).expect("validated"), b))
        .collect();
    let nonlinear_idx = config.nonlinear.then(|| schema.index_of(&config.nonlinear_feature).expect("validated"));
    let pair_idx = config.interaction.then(|| {
        (
            schema.index_of(&config.interaction_features.0).expect("validated"),
            schema.index_of(&config.interaction_features.1).expect("validated"),
        )
    });

    let mut linear_part = vec![0.0; n];
    let mut nonlinear_part = vec![0.0; n];
    let mut interaction_part = vec![0.0; n];
    let mut margins = vec![0.0; n];
    let mut outcomes = vec![0u8; n];
    for r in 0..n {
        let row = &rows[r];
        linear_part[r] = effects.iter().map(|&(c, b)| b * z(row, c)).sum();
        if let Some(c) = nonlinear_idx {
            nonlinear_part[r] = config.nonlinear_coef * (z(row, c).powi(2) - 1.0);
        }
        if let Some((a, b)) = pair_idx {
            interaction_part[r] = config.interaction_coef * z(row, a) * z(row, b);
        }
        margins[r] = config.intercept
            + config.beta_ses * ses[r]
            + config.beta_school_ses * school_mean_ses[r]
            + random_part[r]
            + linear_part[r]
            + nonlinear_part[r]
            + interaction_part[r];
        outcomes[r] = u8::from(rng.random::<f64>() < sigmoid(margins[r]));
    }

    // Subject scores consistent with the outcome under the cutoffs.
    let cut = [config.cutoffs.math, config.cutoffs.reading, config.cutoffs.science];
    let noise = normal(40.0);
    let mut pv = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for r in 0..n {
        let mut s = [0.0; 3];
        for (d, c) in cut.iter().enumerate() {
            s[d] = c + 30.0 * margins[r] + 20.0 * ses[r] + noise.sample(&mut rng);
        }
        if outcomes[r] == 1 {
            for (d, c) in cut.iter().enumerate() {
                if s[d] < *c {
                    s[d] = 2.0 * c - s[d];
                }
            }
        } else if s.iter().zip(&cut).all(|(v, c)| v >= c) {
            let d = (0..3)
                .min_by(|&a, &b| (s[a] - cut[a]).total_cmp(&(s[b] - cut[b])))
                .expect("three subjects");
            s[d] = 2.0 * cut[d] - s[d] - 1.0;
        }
        for d in 0..3 {
            pv[d][r] = s[d];
        }
    }

    if config.missing_rate > 0.0 {
        for row in rows.iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                if rng.random::<f64>() < config.missing_rate && schema.get(c).missing_allowed {
                    *v = f64::NAN;
                }
            }
        }
    }

    let [pv_math, pv_read, pv_scie] = pv;
    let aux: BTreeMap<String, Vec<f64>> = [
        ("escs".to_string(), ses.clone()),
        ("pv_math".to_string(), pv_math),
        ("pv_read".to_string(), pv_read),
        ("pv_scie".to_string(), pv_scie),
    ]
    .into_iter()
    .collect();
    let table = FeatureTable::new(schema, rows, students, schools, countries, None, aux)?;
    Ok(SynthOutput {
        table,
        latent: LatentRecord {
            school_intercepts,
            country_intercepts,
            ses,
            school_mean_ses,
            linear_part,
            nonlinear_part,
            interaction_part,
            margins,
            outcomes,
            feature_means,
            feature_sds,
        },
    })
}
