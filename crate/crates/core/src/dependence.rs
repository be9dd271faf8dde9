//! Partial dependence in probability space, relative probability
//! `RP(v) = f_S(v) / mean prediction` and odds ratios against a reference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::ProbabilityModel;
use crate::matrix::Matrix;

/// Maximum number of points in an automatic grid.
pub const AUTO_GRID_POINTS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpec {
    /// Unique observed values when there are at most 25, else 25 quantiles.
    Auto,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OddsReference {
    /// Mean prediction over the unmodified rows.
    Baseline,
    /// The curve's own value at this grid point.
    GridValue(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: String,
    pub grid: Vec<f64>,
    /// Mean predicted probability with the feature pinned to each grid value.
    pub f_s: Vec<f64>,
    pub rp: Vec<f64>,
    /// `None` where the probability is 0 or 1 and the odds are unbounded.
    pub odds_ratio: Vec<Option<f64>>,
    pub baseline: f64,
    pub reference: OddsReference,
    pub reference_probability: f64,
}

impl PdpCurve {
    pub fn unbounded_points(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.odds_ratio[i].is_none()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "grid_value", "f_s", "rp", "or", "baseline", "reference_probability"])?;
        for i in 0..self.grid.len() {
            w.write_record([
                self.feature.clone(),
                self.grid[i].to_string(),
                self.f_s[i].to_string(),
                self.rp[i].to_string(),
                self.odds_ratio[i].map_or("inf".into(), |v| v.to_string()),
                self.baseline.to_string(),
                self.reference_probability.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("dependence curve", e))?;
        Ok(())
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn auto_grid(column: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = column.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let mut unique = v.clone();
    unique.dedup();
    if unique.len() <= AUTO_GRID_POINTS {
        return unique;
    }
    let mut g: Vec<f64> = (0..AUTO_GRID_POINTS)
        .map(|k| quantile_sorted(&v, k as f64 / (AUTO_GRID_POINTS - 1) as f64))
        .collect();
    g.dedup();
    g
}

fn odds(p: f64) -> Option<f64> {
    (p > 0.0 && p < 1.0).then(|| p / (1.0 - p))
}

/// Odds ratio of each curve point against the reference.
pub fn odds_ratio_transform(curve: &PdpCurve, reference: OddsReference) -> Result<(f64, Vec<Option<f64>>)> {
    let p_ref = match reference {
        OddsReference::Baseline => curve.baseline,
        OddsReference::GridValue(v) => {
            let i = curve
                .grid
                .iter()
                .position(|&g| g == v)
                .ok_or_else(|| Error::InvalidInput(format!("reference {v} is not a grid value")))?;
            curve.f_s[i]
        }
    };
    let o_ref = odds(p_ref).ok_or_else(|| {
        Error::InvalidInput(format!("reference probability {p_ref} has unbounded odds"))
    })?;
    Ok((
        p_ref,
        curve.f_s.iter().map(|&p| odds(p).map(|o| o / o_ref)).collect(),
    ))
}

/// Sweeps one feature over a grid, averaging model probabilities over all rows.
pub fn partial_dependence<M: ProbabilityModel + ?Sized>(
    model: &M,
    x: &Matrix,
    feature: usize,
    feature_name: &str,
    grid: &GridSpec,
) -> Result<PdpCurve> {
    if feature >= x.n_cols() || x.n_cols() != model.n_features() {
        return Err(Error::UnknownFeature(feature_name.to_string()));
    }
    if x.n_rows() == 0 {
        return Err(Error::Empty("rows for partial dependence"));
    }
    let grid = match grid {
        GridSpec::Auto => auto_grid(&x.column(feature)),
        GridSpec::Values(v) => {
            if v.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidInput("grid values must be finite".into()));
            }
            let mut g = v.clone();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    };
    if grid.is_empty() {
        return Err(Error::Empty("partial dependence grid"));
    }
    let mean = |p: Vec<f64>| p.iter().sum::<f64>() / p.len() as f64;
    let baseline = mean(model.predict_probabilities(x)?);
    let f_s: Vec<f64> = grid
        .par_iter()
        .map(|&v| model.predict_probabilities(&x.with_column_value(feature, v)).map(mean))
        .collect::<Result<_>>()?;
    let rp = f_s.iter().map(|f| f / baseline).collect();
    let mut curve = PdpCurve {
        feature: feature_name.to_string(),
        grid,
        f_s,
        rp,
        odds_ratio: Vec::new(),
        baseline,
        reference: OddsReference::Baseline,
        reference_probability: baseline,
    };
    match odds_ratio_transform(&curve, OddsReference::Baseline) {
        Ok((p_ref, or)) => {
            curve.reference_probability = p_ref;
            curve.odds_ratio = or;
        }
        Err(_) => curve.odds_ratio = vec![None; curve.grid.len()],
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::{BoostedEnsemble, Direction, Node, Tree};
    use crate::numeric::sigmoid;

    fn stump_model(a: f64, b: f64, t: f64) -> BoostedEnsemble {
        let tree = Tree::new(vec![
            Node::split(0, t, Direction::Left, 1, 2, 2.0),
            Node::leaf(a, 1.0),
            Node::leaf(b, 1.0),
        ])
        .unwrap();
        BoostedEnsemble::new(-0.2, vec![tree], 2).unwrap()
    }

    fn data() -> Matrix {
        Matrix::from_rows(&(0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn stump_step_matches_closed_form() {
        let (a, b, t) = (-0.5, 1.1, 4.5);
        let m = stump_model(a, b, t);
        let x = data();
        let c = partial_dependence(&m, &x, 0, "x0", &GridSpec::Values(vec![0.0, 4.0, 5.0, 9.0])).unwrap();
        let (pa, pb) = (sigmoid(-0.2 + a), sigmoid(-0.2 + b));
        let baseline = (5.0 * pa + 5.0 * pb) / 10.0;
        assert!((c.baseline - baseline).abs() < 1e-15);
        for (g, rp) in c.grid.iter().zip(&c.rp) {
            let expect = if *g < t { pa } else { pb } / baseline;
            assert!((rp - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn dummy_feature_is_flat() {
        let m = stump_model(-0.5, 1.1, 4.5);
        let c = partial_dependence(&m, &data(), 1, "x1", &GridSpec::Auto).unwrap();
        assert_eq!(c.grid, vec![0.0, 1.0, 2.0]);
        assert!(c.rp.iter().all(|&r| r == 1.0));
        assert!(c.odds_ratio.iter().all(|&o| o == Some(1.0)));
    }

    #[test]
    fn odds_ratio_hand_value_and_reference() {
        let c = PdpCurve {
            feature: "f".into(),
            grid: vec![1.0, 2.0],
            f_s: vec![0.6, 0.5],
            rp: vec![1.2, 1.0],
            odds_ratio: vec![],
            baseline: 0.5,
            reference: OddsReference::Baseline,
            reference_probability: 0.5,
        };
        let (_, or) = odds_ratio_transform(&c, OddsReference::Baseline).unwrap();
        assert!((or[0].unwrap() - 1.5).abs() < 1e-15);
        let (p, or) = odds_ratio_transform(&c, OddsReference::GridValue(1.0)).unwrap();
        assert_eq!(p, 0.6);
        assert_eq!(or[0], Some(1.0));
        assert!(odds_ratio_transform(&c, OddsReference::GridValue(3.0)).is_err());
    }

    #[test]
    fn auto_grid_uses_quantiles_for_many_values() {
        let col: Vec<f64> = (0..101).map(f64::from).collect();
        let g = auto_grid(&col);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[24], 100.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let m = stump_model(0.0, 0.0, 1.0);
        assert!(partial_dependence(&m, &data(), 0, "x0", &GridSpec::Values(vec![])).is_err());
    }
}
