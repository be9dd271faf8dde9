use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    #[serde(alias = "ordinal-integer", alias = "ordinal_integer")]
    Ordinal,
    Binary,
    Categorical,
}

/// Declared type and admissible values of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Category labels; a categorical cell is stored as its index in this list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default = "default_true")]
    pub missing_allowed: bool,
}

fn default_true() -> bool {
    true
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            min: None,
            max: None,
            categories: Vec::new(),
            missing_allowed: true,
        }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.min = Some(min);
        self.max = Some(max);
        self
    }

    /// Parses a raw non-missing cell into its stored numeric value.
    pub fn parse_cell(&self, raw: &str) -> std::result::Result<f64, String> {
        let raw = raw.trim();
        if self.kind == FeatureKind::Categorical {
            return self
                .categories
                .iter()
                .position(|c| c == raw)
                .map(|i| i as f64)
                .ok_or_else(|| format!("`{raw}` is not a declared category"));
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("`{raw}` is not a number"))?;
        self.check_value(v)?;
        Ok(v)
    }

    /// Checks a stored value against the spec; NaN is treated as missing.
    pub fn check_value(&self, v: f64) -> std::result::Result<(), String> {
        if v.is_nan() {
            return if self.missing_allowed {
                Ok(())
            } else {
                Err("missing value not allowed".into())
            };
        }
        if !v.is_finite() {
            return Err(format!("{v} is not finite"));
        }
        match self.kind {
            FeatureKind::Binary => {
                if v != 0.0 && v != 1.0 {
                    return Err(format!("binary feature takes {v}, expected 0 or 1"));
                }
            }
            FeatureKind::Ordinal => {
                if v.fract() != 0.0 {
                    return Err(format!("ordinal feature takes non-integer {v}"));
                }
            }
            FeatureKind::Categorical => {
                if v.fract() != 0.0 || v < 0.0 || v as usize >= self.categories.len() {
                    return Err(format!("category index {v} out of range"));
                }
            }
            FeatureKind::Continuous => {}
        }
        if let Some(lo) = self.min {
            if v < lo {
                return Err(format!("{v} below declared minimum {lo}"));
            }
        }
        if let Some(hi) = self.max {
            if v > hi {
                return Err(format!("{v} above declared maximum {hi}"));
            }
        }
        Ok(())
    }
}

/// Ordered list of feature specs with unique names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureSpec>", into = "Vec<FeatureSpec>")]
pub struct Schema {
    features: Vec<FeatureSpec>,
}

impl TryFrom<Vec<FeatureSpec>> for Schema {
    type Error = Error;

    fn try_from(features: Vec<FeatureSpec>) -> Result<Self> {
        Schema::new(features)
    }
}

impl From<Schema> for Vec<FeatureSpec> {
    fn from(s: Schema) -> Self {
        s.features
    }
}

const TABLE_A1_JSON: &str = include_str!("../../config/table_a1_schema.json");

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::DuplicateFeature(f.name.clone()));
            }
        }
        Ok(Self { features })
    }

    /// The 65 covariates of the student/school/COVID variable table.
    pub fn table_a1() -> Self {
        serde_json::from_str(TABLE_A1_JSON).expect("bundled schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn get(&self, idx: usize) -> &FeatureSpec {
        &self.features[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_a1_has_65_unique_features() {
        let s = Schema::table_a1();
        assert_eq!(s.len(), 65);
        assert_eq!(s.get(s.require("SchBKGD_Private").unwrap()).kind, FeatureKind::Binary);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Schema::new(vec![
            FeatureSpec::new("a", FeatureKind::Binary),
            FeatureSpec::new("a", FeatureKind::Continuous),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateFeature(n) if n == "a"));
        assert!(Schema::from_json(r#"[{"name":"x","kind":"binary"},{"name":"x","kind":"binary"}]"#).is_err());
    }

    #[test]
    fn cell_parsing_by_kind() {
        let b = FeatureSpec::new("b", FeatureKind::Binary);
        assert_eq!(b.parse_cell("1"), Ok(1.0));
        assert!(b.parse_cell("2").is_err());
        let o = FeatureSpec::new("o", FeatureKind::Ordinal).with_range(0.0, 5.0);
        assert!(o.parse_cell("2.5").is_err());
        assert!(o.parse_cell("6").is_err());
        assert_eq!(o.parse_cell("3"), Ok(3.0));
        let mut c = FeatureSpec::new("c", FeatureKind::Categorical);
        c.categories = vec!["low".into(), "high".into()];
        assert_eq!(c.parse_cell("high"), Ok(1.0));
        assert!(c.parse_cell("mid").is_err());
    }
}
