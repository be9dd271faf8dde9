use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_gbt, BoostedEnsemble, GbtParams, Output};
use crate::dataset::FoldAssignment;
use crate::error::{Error, Result};
use crate::linear::{fit_penalized_logit, LinearModel, LinearParams};
use crate::matrix::Matrix;
use crate::metrics::MetricReport;
use crate::numeric::sigmoid;

/// One candidate configuration in a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GridPoint {
    Gbt(GbtParams),
    Linear(LinearParams),
}

impl GridPoint {
    pub fn fit(&self, x: &Matrix, y: &[u8]) -> Result<FittedModel> {
        Ok(match self {
            GridPoint::Gbt(p) => FittedModel::Gbt(fit_gbt(x, y, p)?),
            GridPoint::Linear(p) => FittedModel::Linear(fit_penalized_logit(x, y, p)?),
        })
    }

    pub fn label(&self) -> String {
        match self {
            GridPoint::Gbt(p) => format!(
                "gbt(K={}, eta={}, depth={}, s={})",
                p.n_trees, p.learning_rate, p.max_depth, p.subsample
            ),
            GridPoint::Linear(p) => format!("logit({:?}, C={})", p.penalty, p.c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FittedModel {
    Gbt(BoostedEnsemble),
    Linear(LinearModel),
}

impl FittedModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Gbt(e) => e.predict(row, Output::Probability),
            FittedModel::Linear(m) => m.margin(row).map(sigmoid),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            FittedModel::Gbt(e) => e.predict_matrix(x, Output::Probability),
            FittedModel::Linear(_) => x.rows().map(|r| self.predict_proba(r)).collect(),
        }
    }

    pub fn as_gbt(&self) -> Option<&BoostedEnsemble> {
        match self {
            FittedModel::Gbt(e) => Some(e),
            FittedModel::Linear(_) => None,
        }
    }
}

/// Anything that maps feature rows to a probability.
pub trait ProbabilityModel: Sync {
    fn n_features(&self) -> usize;
    fn predict_probabilities(&self, x: &Matrix) -> Result<Vec<f64>>;
}

impl ProbabilityModel for BoostedEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict_probabilities(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_matrix(x, Output::Probability)
    }
}

impl ProbabilityModel for LinearModel {
    fn n_features(&self) -> usize {
        LinearModel::n_features(self)
    }
    fn predict_probabilities(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.margin(r).map(sigmoid)).collect()
    }
}

impl ProbabilityModel for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Gbt(e) => e.n_features,
            FittedModel::Linear(m) => m.n_features(),
        }
    }
    fn predict_probabilities(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_matrix(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub label: String,
    pub fold_auroc: Vec<f64>,
    pub fold_auprc: Vec<f64>,
    pub mean_auroc: f64,
    pub mean_auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// In declaration order.
    pub results: Vec<GridResult>,
    /// Indices into `results`, best first.
    pub ranking: Vec<usize>,
    pub winner: usize,
}

impl GridSearchResult {
    pub fn best(&self) -> &GridResult {
        &self.results[self.winner]
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "model", "mean_auroc", "mean_auprc", "folds"])?;
        for (rank, &i) in self.ranking.iter().enumerate() {
            let r = &self.results[i];
            w.write_record([
                (rank + 1).to_string(),
                r.label.clone(),
                r.mean_auroc.to_string(),
                r.mean_auprc.to_string(),
                r.fold_auroc.len().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("grid results", e))?;
        Ok(())
    }
}

/// Cross-validated AUROC/AUPRC per grid point.
///
/// The winner has the highest mean AUROC, then the highest mean AUPRC, then
/// the earliest declaration. Results do not depend on thread count.
pub fn grid_search(x: &Matrix, y: &[u8], grid: &[GridPoint], folds: &FoldAssignment) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidInput(format!("{} labels for {} rows", y.len(), x.n_rows())));
    }
    if folds.fold_of.len() != y.len() {
        return Err(Error::InvalidInput("fold assignment does not match the rows".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..folds.folds.len()).map(move |f| (g, f)))
        .collect();
    let scores: Vec<Result<MetricReport>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let fold = &folds.folds[f];
            let xt = x.select_rows(&fold.train);
            let yt: Vec<u8> = fold.train.iter().map(|&i| y[i]).collect();
            let model = grid[g].fit(&xt, &yt)?;
            let xv = x.select_rows(&fold.validation);
            let yv: Vec<u8> = fold.validation.iter().map(|&i| y[i]).collect();
            MetricReport::evaluate(&yv, &model.predict_matrix(&xv)?)
        })
        .collect();
    let k = folds.folds.len();
    let mut results = Vec::with_capacity(grid.len());
    let mut it = scores.into_iter();
    for point in grid {
        let mut fold_auroc = Vec::with_capacity(k);
        let mut fold_auprc = Vec::with_capacity(k);
        for _ in 0..k {
            let m = it.next().expect("one score per job")?;
            fold_auroc.push(m.auroc);
            fold_auprc.push(m.auprc);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        results.push(GridResult {
            point: point.clone(),
            label: point.label(),
            mean_auroc: mean(&fold_auroc),
            mean_auprc: mean(&fold_auprc),
            fold_auroc,
            fold_auprc,
        });
    }
    let mut ranking: Vec<usize> = (0..results.len()).collect();
    ranking.sort_by(|&a, &b| {
        let (ra, rb) = (&results[a], &results[b]);
        rb.mean_auroc
            .total_cmp(&ra.mean_auroc)
            .then(rb.mean_auprc.total_cmp(&ra.mean_auprc))
            .then(a.cmp(&b))
    });
    Ok(GridSearchResult {
        winner: ranking[0],
        ranking,
        results,
    })
}
