//! Second-order gradient-boosted trees for binary outcomes.
//!
//! Each round fits a regression tree to the logistic-loss gradients
//! `g = p - y` and hessians `h = p(1 - p)` by exact greedy split search,
//! with leaf weights `-G / (H + lambda)` shrunk by the learning rate.

mod fit;
mod grid;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::sigmoid;

pub use fit::fit_gbt;
pub use grid::{grid_search, FittedModel, GridPoint, GridResult, GridSearchResult, ProbabilityModel};
pub use tree::{Direction, Node, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    /// Number of boosting rounds.
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
    pub seed: u64,
    /// Overrides the empirical log-odds starting margin. Required for
    /// single-class training data.
    pub base_margin: Option<f64>,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1.0,
            seed: 0,
            base_margin: None,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gbt: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if !(self.min_child_hessian >= 0.0 && self.min_child_hessian.is_finite()) {
            return bad("min_child_hessian must be >= 0");
        }
        if let Some(b) = self.base_margin {
            if !b.is_finite() {
                return bad("base_margin must be finite");
            }
        }
        Ok(())
    }
}

/// Regularized second-order split gain.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(g_left, h_left) + score(g_right, h_right) - score(g_left + g_right, h_left + h_right)) - gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Margin,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_margin: f64,
    pub params: GbtParams,
    #[serde(rename = "M")]
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first round and after each round.
    pub training_log: Vec<f64>,
}

impl BoostedEnsemble {
    pub fn new(base_margin: f64, trees: Vec<Tree>, n_features: usize) -> Result<Self> {
        let e = Self {
            base_margin,
            params: GbtParams {
                n_trees: trees.len(),
                ..GbtParams::default()
            },
            n_features,
            trees,
            training_log: Vec::new(),
        };
        e.check()?;
        Ok(e)
    }

    fn check(&self) -> Result<()> {
        if !self.base_margin.is_finite() {
            return Err(Error::InvalidInput("base margin must be finite".into()));
        }
        for t in &self.trees {
            if let Some(f) = t.max_feature() {
                if f >= self.n_features {
                    return Err(Error::InvalidInput(format!(
                        "tree splits on feature {f} but the ensemble has {} features",
                        self.n_features
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Margin without a width check.
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_margin, |m, t| m + t.predict(row))
    }

    pub fn predict(&self, row: &[f64], output: Output) -> Result<f64> {
        self.check_width(row)?;
        let m = self.margin(row);
        Ok(match output {
            Output::Margin => m,
            Output::Probability => sigmoid(m),
        })
    }

    pub fn predict_matrix(&self, x: &Matrix, output: Output) -> Result<Vec<f64>> {
        if x.n_rows() > 0 && x.n_cols() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok(x.rows()
            .map(|r| {
                let m = self.margin(r);
                match output {
                    Output::Margin => m,
                    Output::Probability => sigmoid(m),
                }
            })
            .collect())
    }

    /// Per-tree contributions to the margin of `row`.
    pub fn tree_contributions(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row)?;
        Ok(self.trees.iter().map(|t| t.predict(row)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        e.check()?;
        Ok(e)
    }
}
