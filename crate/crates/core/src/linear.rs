//! Penalized logistic regression on internally standardized features.
//!
//! Minimizes `sum_i logloss(y_i, b + z_i . w) + penalty(w) / C` with
//! `penalty = ||w||^2 / 2` (L2, damped Newton) or `||w||_1` (L1, monotone
//! accelerated proximal gradient). The intercept is not penalized.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::{log1p_exp, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

mod inverse_strength {
    use serde::{Deserialize, Deserializer, Serializer};

    // `null` encodes an unpenalized fit (C = infinity).
    pub fn serialize<S: Serializer>(c: &f64, s: S) -> Result<S::Ok, S::Error> {
        if c.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*c)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub penalty: Penalty,
    /// Inverse regularization strength; infinity disables the penalty.
    #[serde(rename = "C", with = "inverse_strength")]
    pub c: f64,
    pub max_iterations: usize,
    /// Target max-norm of the (sub)gradient optimality residual, per observation.
    pub tolerance: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            max_iterations: 20_000,
            tolerance: 1e-8,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::Config("linear: C must be > 0".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("linear: tolerance and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Per-feature centering and scaling; `kept == false` marks dropped constant features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub kept: Vec<bool>,
}

impl Standardization {
    pub fn fit(x: &Matrix) -> Self {
        let m = x.n_cols();
        let (mut mean, mut scale, mut kept) = (vec![0.0; m], vec![1.0; m], vec![false; m]);
        for j in 0..m {
            let col: Vec<f64> = x.column(j).into_iter().filter(|v| !v.is_nan()).collect();
            if col.is_empty() {
                continue;
            }
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / col.len() as f64;
            mean[j] = mu;
            let sd = var.sqrt();
            if sd > 1e-12 * mu.abs().max(1.0) {
                scale[j] = sd;
                kept[j] = true;
            }
        }
        Self { mean, scale, kept }
    }

    /// Standardized value; missing imputes to the mean (0 after centering).
    #[inline]
    pub fn z(&self, j: usize, v: f64) -> f64 {
        if v.is_nan() || !self.kept[j] {
            0.0
        } else {
            (v - self.mean[j]) / self.scale[j]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// One weight per input feature on the standardized scale; zero for dropped features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub params: LinearParams,
    pub standardization: Standardization,
    pub iterations: usize,
    pub converged: bool,
    /// Final optimality residual.
    pub residual: f64,
    pub objective: f64,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::WidthMismatch {
                expected: self.weights.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .fold(self.intercept, |m, (j, &v)| m + self.weights[j] * self.standardization.z(j, v)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn predict_linear(model: &LinearModel, row: &[f64]) -> Result<f64> {
    model.margin(row).map(sigmoid)
}

struct Problem {
    /// Standardized design over kept features, row-major.
    z: Vec<f64>,
    p: usize,
    y: Vec<f64>,
    inv_c: f64,
    penalty: Penalty,
}

impl Problem {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        self.z
            .chunks_exact(self.p.max(1))
            .take(self.n())
            .map(|r| theta[0] + (0..self.p).map(|j| r[j] * theta[j + 1]).sum::<f64>())
            .collect()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        self.margins(theta)
            .iter()
            .zip(&self.y)
            .map(|(&m, &y)| log1p_exp(m) - y * m)
            .sum()
    }

    fn penalty_value(&self, theta: &[f64]) -> f64 {
        if self.inv_c == 0.0 {
            return 0.0;
        }
        let w = &theta[1..];
        self.inv_c
            * match self.penalty {
                Penalty::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
                Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>(),
            }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.loss(theta) + self.penalty_value(theta)
    }

    /// Gradient of the summed loss (no penalty) and fitted probabilities.
    fn loss_gradient(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let probs: Vec<f64> = self.margins(theta).into_iter().map(sigmoid).collect();
        let mut g = vec![0.0; self.p + 1];
        for (i, (&pr, &y)) in probs.iter().zip(&self.y).enumerate() {
            let r = pr - y;
            g[0] += r;
            let row = &self.z[i * self.p..(i + 1) * self.p];
            for j in 0..self.p {
                g[j + 1] += r * row[j];
            }
        }
        (g, probs)
    }

    /// Max-norm optimality residual (subgradient box condition for L1).
    fn residual(&self, theta: &[f64], g: &[f64]) -> f64 {
        let mut r = g[0].abs();
        for j in 1..=self.p {
            let v = match self.penalty {
                Penalty::L2 => (g[j] + self.inv_c * theta[j]).abs(),
                Penalty::L1 if theta[j] != 0.0 => (g[j] + self.inv_c * theta[j].signum()).abs(),
                Penalty::L1 => (g[j].abs() - self.inv_c).max(0.0),
            };
            r = r.max(v);
        }
        r
    }
}

struct Solution {
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
    objective_trace: Vec<f64>,
}

fn newton_l2(pb: &Problem, theta0: Vec<f64>, params: &LinearParams) -> Solution {
    let d = pb.p + 1;
    let mut theta = theta0;
    let mut f = pb.objective(&theta);
    let mut trace = vec![f];
    let tol = params.tolerance * pb.n().max(1) as f64;
    let max_iter = params.max_iterations.min(500);
    for it in 0..max_iter {
        let (mut g, probs) = pb.loss_gradient(&theta);
        let res = pb.residual(&theta, &g);
        for j in 1..d {
            g[j] += pb.inv_c * theta[j];
        }
        if res < tol {
            return Solution {
                theta,
                iterations: it,
                converged: true,
                residual: res,
                objective_trace: trace,
            };
        }
        let mut h = hessian(pb, &probs);
        for j in 1..d {
            h[(j, j)] += pb.inv_c;
        }
        // Tiny ridge keeps the unpenalized system solvable near separation.
        let scale = (0..d).map(|k| h[(k, k)]).fold(0.0f64, f64::max).max(1.0);
        let mut ridge = 0.0;
        let step = loop {
            let mut hr = h.clone();
            for k in 0..d {
                hr[(k, k)] += ridge;
            }
            if let Some(ch) = hr.cholesky() {
                break ch.solve(&DVector::from_column_slice(&g));
            }
            ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
        };
        let mut t = 1.0;
        let slope: f64 = -g.iter().zip(step.iter()).map(|(a, b)| a * b).sum::<f64>();
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fc = pb.objective(&cand);
            if fc <= f + 1e-4 * t * slope || (fc <= f && t < 1e-8) {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(f);
        if !accepted {
            let res = pb.residual(&theta, &pb.loss_gradient(&theta).0);
            return Solution {
                theta,
                iterations: it + 1,
                converged: res < tol,
                residual: res,
                objective_trace: trace,
            };
        }
    }
    let res = pb.residual(&theta, &pb.loss_gradient(&theta).0);
    Solution {
        theta,
        iterations: max_iter,
        converged: res < tol,
        residual: res,
        objective_trace: trace,
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn hessian(pb: &Problem, probs: &[f64]) -> DMatrix<f64> {
    let d = pb.p + 1;
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (i, &pr) in probs.iter().enumerate() {
        let w = pr * (1.0 - pr);
        let row = &pb.z[i * pb.p..(i + 1) * pb.p];
        let xi = |k: usize| if k == 0 { 1.0 } else { row[k - 1] };
        for a in 0..d {
            let wa = w * xi(a);
            for b in 0..=a {
                h[(a, b)] += wa * xi(b);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    h
}

/// Proximal Newton: each outer step minimizes the local quadratic model plus
/// the L1 term by cyclic coordinate descent, then line-searches the true objective.
fn proximal_newton_l1(pb: &Problem, theta0: Vec<f64>, params: &LinearParams) -> Solution {
    let d = pb.p + 1;
    let lam = pb.inv_c;
    let l1 = |t: &[f64]| t[1..].iter().map(|v| v.abs()).sum::<f64>();
    let tol = params.tolerance * pb.n().max(1) as f64;
    let mut theta = theta0;
    let mut f = pb.objective(&theta);
    let mut trace = vec![f];
    let max_iter = params.max_iterations.min(1000);
    for it in 0..max_iter {
        let (g, probs) = pb.loss_gradient(&theta);
        let res = pb.residual(&theta, &g);
        if res < tol {
            return Solution {
                theta,
                iterations: it,
                converged: true,
                residual: res,
                objective_trace: trace,
            };
        }
        let h = hessian(pb, &probs);
        let mut delta = vec![0.0; d];
        let mut hd = vec![0.0; d];
        for _sweep in 0..200 {
            let mut max_change = 0.0f64;
            for k in 0..d {
                let a = h[(k, k)] + 1e-12;
                let b = g[k] + hd[k];
                let cur = theta[k] + delta[k];
                let next = if k == 0 || lam == 0.0 {
                    cur - b / a
                } else {
                    soft_threshold(cur - b / a, lam / a)
                };
                let change = next - cur;
                if change != 0.0 {
                    delta[k] += change;
                    for m in 0..d {
                        hd[m] += h[(m, k)] * change;
                    }
                    max_change = max_change.max(change.abs() * a.sqrt());
                }
            }
            if max_change < 1e-3 * tol {
                break;
            }
        }
        let trial = |t: f64| -> Vec<f64> { theta.iter().zip(&delta).map(|(a, s)| a + t * s).collect() };
        let decrease = g.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() + lam * (l1(&trial(1.0)) - l1(&theta));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = trial(t);
            let fc = pb.objective(&cand);
            if fc <= f + 0.01 * t * decrease.min(0.0) && fc <= f {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(f);
        if !accepted {
            let res = pb.residual(&theta, &pb.loss_gradient(&theta).0);
            return Solution {
                theta,
                iterations: it + 1,
                converged: res < tol,
                residual: res,
                objective_trace: trace,
            };
        }
    }
    let res = pb.residual(&theta, &pb.loss_gradient(&theta).0);
    Solution {
        theta,
        iterations: max_iter,
        converged: res < tol,
        residual: res,
        objective_trace: trace,
    }
}

/// Fits the penalized logit. Missing values are mean-imputed; constant
/// features are dropped (weight 0) with a warning.
pub fn fit_penalized_logit(x: &Matrix, y: &[u8], params: &LinearParams) -> Result<LinearModel> {
    fit_with_trace(x, y, params).map(|(m, _)| m)
}

/// Like [`fit_penalized_logit`] but also returns the objective after each iteration.
pub fn fit_with_trace(x: &Matrix, y: &[u8], params: &LinearParams) -> Result<(LinearModel, Vec<f64>)> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Empty("training rows"));
    }
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} rows", y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    let st = Standardization::fit(x);
    let kept: Vec<usize> = (0..x.n_cols()).filter(|&j| st.kept[j]).collect();
    for j in 0..x.n_cols() {
        if !st.kept[j] {
            warn!("linear baseline: dropping constant feature {j}");
        }
    }
    let p = kept.len();
    let mut z = Vec::with_capacity(n * p);
    for row in x.rows() {
        z.extend(kept.iter().map(|&j| st.z(j, row[j])));
    }
    let pb = Problem {
        z,
        p,
        y: y.iter().map(|&v| f64::from(v)).collect(),
        inv_c: 1.0 / params.c,
        penalty: params.penalty,
    };
    let mut theta0 = vec![0.0; p + 1];
    theta0[0] = (pos as f64 / (n - pos) as f64).ln();
    let sol = match params.penalty {
        Penalty::L2 => newton_l2(&pb, theta0, params),
        Penalty::L1 if pb.inv_c == 0.0 => newton_l2(&pb, theta0, params),
        Penalty::L1 => proximal_newton_l1(&pb, theta0, params),
    };
    if !sol.converged {
        warn!(
            "linear baseline ({:?}, C = {}) stopped after {} iterations with residual {:.3e}; \
             the classes may be separable under a weak penalty",
            params.penalty, params.c, sol.iterations, sol.residual
        );
    }
    let mut weights = vec![0.0; x.n_cols()];
    for (k, &j) in kept.iter().enumerate() {
        weights[j] = sol.theta[k + 1];
    }
    let objective = *sol.objective_trace.last().expect("trace starts nonempty");
    Ok((
        LinearModel {
            weights,
            intercept: sol.theta[0],
            params: params.clone(),
            standardization: st,
            iterations: sol.iterations,
            converged: sol.converged,
            residual: sol.residual,
            objective,
        },
        sol.objective_trace,
    ))
}
