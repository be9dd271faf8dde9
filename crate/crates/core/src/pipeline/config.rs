use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, LoadOptions, Schema, SynthConfig};
use crate::error::{Error, Result};
use crate::gbt::{GbtParams, GridPoint};
use crate::indicators::{IndicatorOptions, Sar};
use crate::linear::{LinearParams, Penalty};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub data: PathBuf,
    /// Defaults to the bundled 65-feature schema.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub load: LoadOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub targets: Vec<Sar>,
    pub folds: usize,
    pub grid: Vec<GridPoint>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        let gbt = |n_trees, max_depth| {
            GridPoint::Gbt(GbtParams {
                n_trees,
                max_depth,
                learning_rate: 0.1,
                subsample: 0.8,
                ..GbtParams::default()
            })
        };
        let logit = |penalty, c| {
            GridPoint::Linear(LinearParams {
                penalty,
                c,
                ..LinearParams::default()
            })
        };
        Self {
            targets: Sar::ALL.to_vec(),
            folds: 5,
            grid: vec![gbt(100, 3), gbt(100, 5), logit(Penalty::L2, 1.0), logit(Penalty::L1, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Features kept in the importance ranking figure.
    pub top_n: usize,
    pub beeswarm_features: usize,
    pub local_top_k: usize,
    /// Cap on rows explained per target; rows beyond it are sampled deterministically.
    pub max_shap_rows: Option<usize>,
    pub dependence_features: Vec<String>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            top_n: 25,
            beeswarm_features: 20,
            local_top_k: 12,
            max_shap_rows: Some(2000),
            dependence_features: [
                "CovidBKGD_Closeddays",
                "CovidBKGD_PropStudRemoteL",
                "CovidBKGD_BarrierRemoteLWeb",
                "CovidBKGD_BarrierRemoteLSysEM",
                "StudBKGD_Curiosity",
                "StudBKGD_Perseverance",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    const SYMBOLS: [(&'static str, CompareOp); 6] = [
        ("==", CompareOp::Eq),
        ("!=", CompareOp::Ne),
        ("<=", CompareOp::Le),
        (">=", CompareOp::Ge),
        ("<", CompareOp::Lt),
        (">", CompareOp::Gt),
    ];

    fn symbol(self) -> &'static str {
        Self::SYMBOLS.iter().find(|(_, op)| *op == self).expect("listed").0
    }
}

/// Row filter of the form `FEATURE OP VALUE`, e.g. `SchBKGD_Private == 1`.
/// Rows with a missing value never match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Filter {
    pub feature: String,
    pub op: CompareOp,
    pub value: f64,
}

impl Filter {
    pub fn matches(&self, v: f64) -> bool {
        if v.is_nan() {
            return false;
        }
        match self.op {
            CompareOp::Eq => v == self.value,
            CompareOp::Ne => v != self.value,
            CompareOp::Lt => v < self.value,
            CompareOp::Le => v <= self.value,
            CompareOp::Gt => v > self.value,
            CompareOp::Ge => v >= self.value,
        }
    }

    /// Row indices of `table` (restricted to `rows`) that satisfy the filter.
    pub fn select(&self, table: &FeatureTable, rows: &[usize]) -> Result<Vec<usize>> {
        let j = table.schema().require(&self.feature)?;
        Ok(rows.iter().copied().filter(|&i| self.matches(table.value(i, j))).collect())
    }
}

impl FromStr for Filter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse filter `{s}`; expected `FEATURE OP VALUE`"));
        let (pos, sym, op) = CompareOp::SYMBOLS
            .iter()
            .filter_map(|(sym, op)| s.find(sym).map(|p| (p, *sym, *op)))
            .min_by_key(|(p, sym, _)| (*p, std::cmp::Reverse(sym.len())))
            .ok_or_else(bad)?;
        let feature = s[..pos].trim();
        let value: f64 = s[pos + sym.len()..].trim().parse().map_err(|_| bad())?;
        if feature.is_empty() || !value.is_finite() {
            return Err(bad());
        }
        Ok(Filter {
            feature: feature.to_string(),
            op,
            value,
        })
    }
}

impl TryFrom<String> for Filter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Filter> for String {
    fn from(f: Filter) -> String {
        f.to_string()
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.feature, self.op.symbol(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsamplePair {
    pub name: String,
    pub label_a: String,
    pub filter_a: Filter,
    pub label_b: String,
    pub filter_b: Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleConfig {
    pub targets: Vec<Sar>,
    pub top_n: usize,
    pub pairs: Vec<SubsamplePair>,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        let pair = |name: &str, a: &str, fa: &str, b: &str, fb: &str| SubsamplePair {
            name: name.into(),
            label_a: a.into(),
            filter_a: fa.parse().expect("valid default filter"),
            label_b: b.into(),
            filter_b: fb.parse().expect("valid default filter"),
        };
        Self {
            targets: vec![Sar::Sar1, Sar::Sar2],
            top_n: 25,
            pairs: vec![
                pair("private_public", "private", "SchBKGD_Private == 1", "public", "SchBKGD_Private == 0"),
                pair("urban_rural", "urban", "SchBKGD_Urban == 1", "rural", "SchBKGD_Urban == 0"),
            ],
        }
    }
}

/// Everything a pipeline run needs. Exactly one of `input` and `synth` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<InputConfig>,
    /// Absent unless written out; only the built-in default config synthesizes.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    pub indicators: IndicatorOptions,
    pub models: ModelsConfig,
    pub explain: ExplainConfig,
    pub subsample: SubsampleConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            synth: Some(SynthConfig::default()),
            indicators: IndicatorOptions::default(),
            models: ModelsConfig::default(),
            explain: ExplainConfig::default(),
            subsample: SubsampleConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The schema the run will use.
    pub fn schema(&self) -> Result<Schema> {
        match (&self.input, &self.synth) {
            (Some(input), None) => match &input.schema {
                Some(p) => Schema::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)
                    .map_err(|e| Error::Config(format!("schema {}: {e}", p.display()))),
                None => Ok(Schema::table_a1()),
            },
            (None, Some(s)) => Ok(s.schema.clone().unwrap_or_else(Schema::table_a1)),
            _ => Err(Error::Config("exactly one of `input` and `synth` must be given".into())),
        }
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<Schema> {
        let schema = self.schema()?;
        let cfg = |m: String| Err(Error::Config(m));
        if let Some(input) = &self.input {
            if !input.data.is_file() {
                return cfg(format!("input data {} not found", input.data.display()));
            }
        }
        self.indicators.cutoffs.validate()?;
        if self.models.targets.is_empty() {
            return cfg("models.targets is empty".into());
        }
        if self.models.folds < 2 {
            return cfg("models.folds must be >= 2".into());
        }
        if self.models.grid.is_empty() {
            return cfg("models.grid is empty".into());
        }
        if !self.models.grid.iter().any(|p| matches!(p, GridPoint::Gbt(_))) {
            return cfg("models.grid needs at least one gbt point to explain".into());
        }
        for p in &self.models.grid {
            match p {
                GridPoint::Gbt(g) => g.validate()?,
                GridPoint::Linear(l) => l.validate()?,
            }
        }
        if self.explain.top_n == 0 || self.subsample.top_n == 0 {
            return cfg("top_n must be >= 1".into());
        }
        for f in &self.explain.dependence_features {
            schema
                .require(f)
                .map_err(|_| Error::Config(format!("dependence feature `{f}` is not in the schema")))?;
        }
        for pair in &self.subsample.pairs {
            for f in [&pair.filter_a, &pair.filter_b] {
                schema
                    .require(&f.feature)
                    .map_err(|_| Error::Config(format!("subsample filter feature `{}` is not in the schema", f.feature)))?;
            }
        }
        if let Some(s) = &self.synth {
            for name in s.feature_effects.keys() {
                schema
                    .require(name)
                    .map_err(|_| Error::Config(format!("synth effect feature `{name}` is not in the schema")))?;
            }
        }
        Ok(schema)
    }
}
