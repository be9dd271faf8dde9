//! Three-level random-intercept logistic regression.
//!
//! ```text
//! logit P(y = 1) = b0 + b1 * ses + b2 * school_mean_ses + u_school + v_country
//! u ~ N(0, s2_school),  v ~ N(0, s2_country)
//! ```
//!
//! Estimation is by Laplace approximation / penalized quasi-likelihood. For
//! fixed variance components the posterior mode of `(b, u, v)` is found by
//! penalized Newton-Raphson; the school block of the Hessian is diagonal and
//! is eliminated with a Schur complement, so each step solves a system of size
//! `3 + countries`. Variances are then updated with the EM rule
//! `s2 = mean(mode^2 + conditional variance)` until the relative change drops
//! below the tolerance.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::assign_quintiles;
use crate::error::{Error, Result};
use crate::numeric::{log1p_exp, sigmoid};

/// Variance of the standard logistic distribution, `pi^2 / 3`.
pub const LEVEL1_VARIANCE: f64 = PI * PI / 3.0;

const FIXED_NAMES: [&str; 3] = ["intercept", "ses", "school_mean_ses"];
/// Variance components below this are snapped to zero.
const VARIANCE_FLOOR: f64 = 1e-6;
/// Coefficient magnitude taken as evidence of separation.
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultilevelOptions {
    pub max_outer_iterations: usize,
    pub tolerance: f64,
    pub max_inner_iterations: usize,
    pub inner_tolerance: f64,
    pub initial_sigma2_school: f64,
    pub initial_sigma2_country: f64,
    /// Pin `(school, country)` variances instead of estimating them.
    pub fixed_variances: Option<(f64, f64)>,
}

impl Default for MultilevelOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 200,
            tolerance: 1e-6,
            max_inner_iterations: 100,
            inner_tolerance: 1e-10,
            initial_sigma2_school: 0.5,
            initial_sigma2_country: 0.5,
            fixed_variances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub final_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelFit {
    pub beta0: f64,
    pub beta_ses: f64,
    pub beta_school_ses: f64,
    /// Wald standard errors of `(beta0, beta_ses, beta_school_ses)`.
    pub beta_se: [f64; 3],
    pub sigma2_school: f64,
    pub sigma2_country: f64,
    pub level1_variance: f64,
    pub school_intercepts: BTreeMap<String, f64>,
    pub country_intercepts: BTreeMap<String, f64>,
    pub school_mean_ses: BTreeMap<String, f64>,
    pub school_country: BTreeMap<String, String>,
    pub convergence: Convergence,
}

impl MultilevelFit {
    /// Linear predictor including posterior-mode intercepts.
    ///
    /// An unknown school contributes a zero intercept and the average school-mean SES.
    pub fn linear_predictor(&self, ses: f64, school: &str, country: &str) -> f64 {
        let school_ses = self.school_mean_ses.get(school).copied().unwrap_or_else(|| {
            self.school_mean_ses.values().sum::<f64>() / self.school_mean_ses.len().max(1) as f64
        });
        self.beta0
            + self.beta_ses * ses
            + self.beta_school_ses * school_ses
            + self.school_intercepts.get(school).copied().unwrap_or(0.0)
            + self.country_intercepts.get(country).copied().unwrap_or(0.0)
    }

    pub fn predict_probability(&self, ses: f64, school: &str, country: &str) -> f64 {
        sigmoid(self.linear_predictor(ses, school, country))
    }

    /// Quintile (1..=5) of each school's intercept among all schools, ties by school id order.
    pub fn intercept_quintiles(&self) -> BTreeMap<String, u8> {
        let ids: Vec<&String> = self.school_intercepts.keys().collect();
        let values: Vec<f64> = self.school_intercepts.values().copied().collect();
        if values.is_empty() {
            return BTreeMap::new();
        }
        let q = assign_quintiles(&values, &vec![1.0; values.len()]).expect("finite intercepts");
        ids.into_iter().cloned().zip(q).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mean SES per school over all of the school's rows.
pub fn school_means(ses: &[f64], school_ids: &[String]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (s, v) in school_ids.iter().zip(ses) {
        if v.is_finite() {
            let e = acc.entry(s.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()
}

/// Data indexed by dense school/country positions, rows grouped by school.
struct Indexed {
    schools: Vec<String>,
    countries: Vec<String>,
    school_country: Vec<usize>,
    /// Rows of each school as `(y, x)` with `x = [1, ses, school_mean_ses]`.
    rows: Vec<Vec<(f64, [f64; 3])>>,
}

impl Indexed {
    fn build(
        y: &[u8],
        ses: &[f64],
        school_mean_ses: &BTreeMap<String, f64>,
        school_ids: &[String],
        country_ids: &[String],
    ) -> Result<Self> {
        let n = y.len();
        if ses.len() != n || school_ids.len() != n || country_ids.len() != n {
            return Err(Error::InvalidInput("multilevel inputs differ in length".into()));
        }
        let mut school_map: BTreeMap<&str, &str> = BTreeMap::new();
        for (s, c) in school_ids.iter().zip(country_ids) {
            if let Some(prev) = school_map.insert(s, c) {
                if prev != c {
                    return Err(Error::SchoolInTwoCountries {
                        school: s.clone(),
                        first: prev.to_string(),
                        second: c.clone(),
                    });
                }
            }
        }
        let countries: Vec<String> = {
            let set: std::collections::BTreeSet<&str> = country_ids.iter().map(String::as_str).collect();
            set.into_iter().map(str::to_string).collect()
        };
        let schools: Vec<String> = school_map.keys().map(|s| s.to_string()).collect();
        let school_country = school_map
            .values()
            .map(|c| countries.binary_search_by(|x| x.as_str().cmp(c)).expect("present"))
            .collect();
        let mut rows = vec![Vec::new(); schools.len()];
        for i in 0..n {
            if y[i] > 1 {
                return Err(Error::InvalidInput(format!("label {} at row {i} is not binary", y[i])));
            }
            if !ses[i].is_finite() {
                return Err(Error::InvalidInput(format!("non-finite SES at row {i}")));
            }
            let j = schools.binary_search(&school_ids[i]).expect("present");
            let sbar = *school_mean_ses
                .get(&school_ids[i])
                .ok_or_else(|| Error::InvalidInput(format!("no school-mean SES for `{}`", school_ids[i])))?;
            rows[j].push((f64::from(y[i]), [1.0, ses[i], sbar]));
        }
        Ok(Self {
            schools,
            countries,
            school_country,
            rows,
        })
    }
}

/// Mode of the penalized likelihood at fixed variances.
struct Mode {
    beta: [f64; 3],
    u: Vec<f64>,
    v: Vec<f64>,
    /// Conditional variances of u and v (diagonal of the inverse Hessian).
    var_u: Vec<f64>,
    var_v: Vec<f64>,
    /// Inverse Hessian block for the fixed effects.
    cov_beta: [[f64; 3]; 3],
    grad_norm: f64,
}

struct Accum {
    // per school
    g_s: Vec<f64>,
    w_s: Vec<f64>,
    wx_s: Vec<[f64; 3]>,
    // fixed effects
    g_b: [f64; 3],
    h_bb: [[f64; 3]; 3],
    nll: f64,
}

fn accumulate(data: &Indexed, beta: &[f64; 3], u: &[f64], v: &[f64]) -> Accum {
    let j_n = data.schools.len();
    let mut acc = Accum {
        g_s: vec![0.0; j_n],
        w_s: vec![0.0; j_n],
        wx_s: vec![[0.0; 3]; j_n],
        g_b: [0.0; 3],
        h_bb: [[0.0; 3]; 3],
        nll: 0.0,
    };
    for (j, rows) in data.rows.iter().enumerate() {
        let offset = u[j] + v[data.school_country[j]];
        for (y, x) in rows {
            let eta = beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2] + offset;
            let p = sigmoid(eta);
            let g = p - y;
            let w = p * (1.0 - p);
            acc.nll += log1p_exp(eta) - y * eta;
            acc.g_s[j] += g;
            acc.w_s[j] += w;
            for a in 0..3 {
                acc.wx_s[j][a] += w * x[a];
                acc.g_b[a] += g * x[a];
                for b in 0..3 {
                    acc.h_bb[a][b] += w * x[a] * x[b];
                }
            }
        }
    }
    acc
}

fn penalized_nll(data: &Indexed, beta: &[f64; 3], u: &[f64], v: &[f64], s2u: f64, s2v: f64) -> f64 {
    let mut nll = 0.0;
    for (j, rows) in data.rows.iter().enumerate() {
        let offset = u[j] + v[data.school_country[j]];
        for (y, x) in rows {
            let eta = beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2] + offset;
            nll += log1p_exp(eta) - y * eta;
        }
    }
    if s2u > 0.0 {
        nll += u.iter().map(|x| x * x).sum::<f64>() / (2.0 * s2u);
    }
    if s2v > 0.0 {
        nll += v.iter().map(|x| x * x).sum::<f64>() / (2.0 * s2v);
    }
    nll
}

/// Reduced system after eliminating the school block.
struct Reduced {
    s: DMatrix<f64>,
    rhs: DVector<f64>,
    a: Vec<f64>,
    b: Vec<DVector<f64>>,
    g_u: Vec<f64>,
    grad_norm: f64,
}

fn reduced_system(data: &Indexed, acc: &Accum, u: &[f64], v: &[f64], s2u: f64, s2v: f64) -> Reduced {
    let k_n = data.countries.len();
    let q = 3 + k_n;
    let use_u = s2u > 0.0;
    let use_v = s2v > 0.0;
    let mut h = DMatrix::<f64>::zeros(q, q);
    let mut g = DVector::<f64>::zeros(q);
    for a in 0..3 {
        g[a] = acc.g_b[a];
        for b in 0..3 {
            h[(a, b)] = acc.h_bb[a][b];
        }
    }
    // Country block and its coupling to the fixed effects.
    for j in 0..data.schools.len() {
        let k = 3 + data.school_country[j];
        if use_v {
            g[k] += acc.g_s[j];
            h[(k, k)] += acc.w_s[j];
            for a in 0..3 {
                h[(a, k)] += acc.wx_s[j][a];
                h[(k, a)] += acc.wx_s[j][a];
            }
        }
    }
    for k in 0..k_n {
        if use_v {
            g[3 + k] += v[k] / s2v;
            h[(3 + k, 3 + k)] += 1.0 / s2v;
        } else {
            h[(3 + k, 3 + k)] = 1.0;
            g[3 + k] = 0.0;
        }
    }
    let mut grad_norm = g.amax();

    let mut a_vec = Vec::with_capacity(data.schools.len());
    let mut b_vec = Vec::with_capacity(data.schools.len());
    let mut g_u = Vec::with_capacity(data.schools.len());
    let mut s = h;
    let mut rhs = g;
    for j in 0..data.schools.len() {
        if !use_u {
            a_vec.push(1.0);
            b_vec.push(DVector::zeros(q));
            g_u.push(0.0);
            continue;
        }
        let a = acc.w_s[j] + 1.0 / s2u;
        let mut b = DVector::<f64>::zeros(q);
        for c in 0..3 {
            b[c] = acc.wx_s[j][c];
        }
        if use_v {
            b[3 + data.school_country[j]] = acc.w_s[j];
        }
        let gu = acc.g_s[j] + u[j] / s2u;
        grad_norm = grad_norm.max(gu.abs());
        s -= (&b * b.transpose()) / a;
        rhs -= &b * (gu / a);
        a_vec.push(a);
        b_vec.push(b);
        g_u.push(gu);
    }
    Reduced {
        s,
        rhs,
        a: a_vec,
        b: b_vec,
        g_u,
        grad_norm,
    }
}

fn solve_mode(
    data: &Indexed,
    start: &Mode,
    s2u: f64,
    s2v: f64,
    options: &MultilevelOptions,
) -> Result<Mode> {
    let j_n = data.schools.len();
    let k_n = data.countries.len();
    let mut beta = start.beta;
    let mut u = if s2u > 0.0 { start.u.clone() } else { vec![0.0; j_n] };
    let mut v = if s2v > 0.0 { start.v.clone() } else { vec![0.0; k_n] };
    let mut obj = penalized_nll(data, &beta, &u, &v, s2u, s2v);

    for _ in 0..options.max_inner_iterations {
        let acc = accumulate(data, &beta, &u, &v);
        let red = reduced_system(data, &acc, &u, &v, s2u, s2v);
        if red.grad_norm < options.inner_tolerance {
            break;
        }
        let chol = red.s.clone().cholesky().ok_or(Error::Singular("multilevel Newton step"))?;
        let dr = chol.solve(&red.rhs);
        let du: Vec<f64> = (0..j_n)
            .map(|j| if s2u > 0.0 { (red.g_u[j] - red.b[j].dot(&dr)) / red.a[j] } else { 0.0 })
            .collect();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nb = [beta[0] - step * dr[0], beta[1] - step * dr[1], beta[2] - step * dr[2]];
            let nu: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x - step * d).collect();
            let nv: Vec<f64> = (0..k_n)
                .map(|k| if s2v > 0.0 { v[k] - step * dr[3 + k] } else { 0.0 })
                .collect();
            let nobj = penalized_nll(data, &nb, &nu, &nv, s2u, s2v);
            if nobj <= obj + 1e-12 * obj.abs().max(1.0) {
                beta = nb;
                u = nu;
                v = nv;
                obj = nobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if let Some(idx) = beta.iter().position(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation(FIXED_NAMES[idx].to_string()));
        }
        let max_step = dr.amax().max(du.iter().fold(0.0f64, |m, d| m.max(d.abs()))) * step;
        if !accepted || max_step < options.inner_tolerance {
            break;
        }
    }

    // Conditional variances at the mode.
    let acc = accumulate(data, &beta, &u, &v);
    let red = reduced_system(data, &acc, &u, &v, s2u, s2v);
    let chol = red.s.clone().cholesky().ok_or(Error::Singular("multilevel covariance"))?;
    let s_inv = chol.inverse();
    let var_u = (0..j_n)
        .map(|j| {
            if s2u > 0.0 {
                let a = red.a[j];
                1.0 / a + (red.b[j].transpose() * &s_inv * &red.b[j])[0] / (a * a)
            } else {
                0.0
            }
        })
        .collect();
    let var_v = (0..k_n)
        .map(|k| if s2v > 0.0 { s_inv[(3 + k, 3 + k)] } else { 0.0 })
        .collect();
    let mut cov_beta = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            cov_beta[a][b] = s_inv[(a, b)];
        }
    }
    Ok(Mode {
        beta,
        u,
        v,
        var_u,
        var_v,
        cov_beta,
        grad_norm: red.grad_norm,
    })
}

/// Fits the three-level random-intercept logit.
///
/// Non-convergence of the variance iteration is reported in
/// [`MultilevelFit::convergence`] and logged, not raised.
pub fn fit_3level_logit(
    y: &[u8],
    ses: &[f64],
    school_mean_ses: &BTreeMap<String, f64>,
    school_ids: &[String],
    country_ids: &[String],
    options: &MultilevelOptions,
) -> Result<MultilevelFit> {
    let data = Indexed::build(y, ses, school_mean_ses, school_ids, country_ids)?;
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    if data.schools.len() < 2 {
        return Err(Error::InvalidInput("need at least two schools".into()));
    }
    let j_n = data.schools.len();
    let k_n = data.countries.len();
    let single_country = k_n < 2;

    let (mut s2u, mut s2v) = match options.fixed_variances {
        Some((a, b)) => (a.max(0.0), b.max(0.0)),
        None => (options.initial_sigma2_school, options.initial_sigma2_country),
    };
    if single_country {
        s2v = 0.0;
    }
    let rate = positives as f64 / y.len() as f64;
    let mut mode = Mode {
        beta: [(rate / (1.0 - rate)).ln(), 0.0, 0.0],
        u: vec![0.0; j_n],
        v: vec![0.0; k_n],
        var_u: vec![0.0; j_n],
        var_v: vec![0.0; k_n],
        cov_beta: [[0.0; 3]; 3],
        grad_norm: f64::INFINITY,
    };

    let mut convergence = Convergence {
        iterations: 0,
        final_change: f64::INFINITY,
        converged: false,
    };
    for it in 1..=options.max_outer_iterations {
        mode = solve_mode(&data, &mode, s2u, s2v, options)?;
        convergence.iterations = it;
        if options.fixed_variances.is_some() {
            convergence.final_change = 0.0;
            convergence.converged = true;
            break;
        }
        let new_s2u = if s2u > 0.0 {
            let v = mode.u.iter().zip(&mode.var_u).map(|(m, c)| m * m + c).sum::<f64>() / j_n as f64;
            if v < VARIANCE_FLOOR { 0.0 } else { v }
        } else {
            0.0
        };
        let new_s2v = if s2v > 0.0 {
            let v = mode.v.iter().zip(&mode.var_v).map(|(m, c)| m * m + c).sum::<f64>() / k_n as f64;
            if v < VARIANCE_FLOOR { 0.0 } else { v }
        } else {
            0.0
        };
        let rel = |new: f64, old: f64| (new - old).abs() / old.abs().max(1e-3);
        let change = rel(new_s2u, s2u).max(rel(new_s2v, s2v));
        s2u = new_s2u;
        s2v = new_s2v;
        convergence.final_change = change;
        if change < options.tolerance {
            mode = solve_mode(&data, &mode, s2u, s2v, options)?;
            convergence.converged = true;
            break;
        }
    }
    if !convergence.converged {
        log::warn!(
            "multilevel variance iteration stopped after {} iterations (relative change {:.3e})",
            convergence.iterations,
            convergence.final_change
        );
    }
    log::debug!("multilevel mode gradient max-norm {:.3e}", mode.grad_norm);

    let beta_se = [
        mode.cov_beta[0][0].max(0.0).sqrt(),
        mode.cov_beta[1][1].max(0.0).sqrt(),
        mode.cov_beta[2][2].max(0.0).sqrt(),
    ];
    Ok(MultilevelFit {
        beta0: mode.beta[0],
        beta_ses: mode.beta[1],
        beta_school_ses: mode.beta[2],
        beta_se,
        sigma2_school: s2u,
        sigma2_country: s2v,
        level1_variance: LEVEL1_VARIANCE,
        school_intercepts: data.schools.iter().cloned().zip(mode.u.iter().copied()).collect(),
        country_intercepts: data.countries.iter().cloned().zip(mode.v.iter().copied()).collect(),
        school_mean_ses: data
            .schools
            .iter()
            .map(|s| (s.clone(), school_mean_ses[s]))
            .collect(),
        school_country: data
            .schools
            .iter()
            .zip(&data.school_country)
            .map(|(s, &k)| (s.clone(), data.countries[k].clone()))
            .collect(),
        convergence,
    })
}

/// Max-norm of the penalized-likelihood gradient at the fitted modes.
pub fn penalized_gradient_norm(
    fit: &MultilevelFit,
    y: &[u8],
    ses: &[f64],
    school_ids: &[String],
    country_ids: &[String],
) -> Result<f64> {
    let data = Indexed::build(y, ses, &fit.school_mean_ses, school_ids, country_ids)?;
    let beta = [fit.beta0, fit.beta_ses, fit.beta_school_ses];
    let u: Vec<f64> = data.schools.iter().map(|s| fit.school_intercepts[s]).collect();
    let v: Vec<f64> = data.countries.iter().map(|c| fit.country_intercepts[c]).collect();
    let acc = accumulate(&data, &beta, &u, &v);
    Ok(reduced_system(&data, &acc, &u, &v, fit.sigma2_school, fit.sigma2_country).grad_norm)
}
