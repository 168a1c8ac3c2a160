//! Logistic regression: IRLS maximum likelihood, L1/L2 coordinate descent,
//! λ paths, cross-validated λ selection and dummy coding.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteDataset;
use crate::error::{Error, Result};
use crate::util::logistic;

pub const IRLS_TOL: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
pub const CD_TOL: f64 = 1e-7;
const CD_INNER_TOL: f64 = 1e-7;
const CD_MAX_OUTER: usize = 200;
const CD_MAX_INNER: usize = 1000;
const MIN_WEIGHT: f64 = 1e-5;
const PATH_MAX_DEV_RATIO: f64 = 0.999;
const PATH_MIN_DEV_STEP: f64 = 1e-5;
const PATH_MIN_STEPS: usize = 5;
/// Ratio between the L1 and L2 λ_max; an L2 path starts where ridge is
/// effectively the null model.
const L2_LAMBDA_MAX_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    /// Variable the column was built from.
    pub source: String,
    /// Interval label for dummy columns.
    pub level: Option<String>,
    pub reference: Option<String>,
}

impl ColumnMeta {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            source: name.to_string(),
            level: None,
            reference: None,
        }
    }
}

/// Row-major design matrix without an intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n_rows: usize,
    data: Vec<f64>,
    pub columns: Vec<ColumnMeta>,
}

impl DesignMatrix {
    pub fn from_columns(columns: Vec<ColumnMeta>, values: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: values.len(),
            });
        }
        let n = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        let p = columns.len();
        let mut data = vec![0.0; n * p];
        for (j, col) in values.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * p + j] = v;
            }
        }
        Ok(Self {
            n_rows: n,
            data,
            columns,
        })
    }

    pub fn intercept_only(n_rows: usize) -> Self {
        Self {
            n_rows,
            data: Vec::new(),
            columns: Vec::new(),
        }
    }

    /// Continuous design from named columns.
    pub fn continuous(names: &[&str], values: &[Vec<f64>]) -> Result<Self> {
        Self::from_columns(
            names.iter().map(|n| ColumnMeta::continuous(n)).collect(),
            values,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let p = self.n_cols();
        let mut data = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            data,
            columns: self.columns.clone(),
        }
    }

    /// Appends columns built row by row.
    pub fn with_extra_columns(&self, extra: Vec<ColumnMeta>, values: &[Vec<f64>]) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = (0..self.n_cols()).map(|j| self.column(j)).collect();
        cols.extend(values.iter().cloned());
        let mut meta = self.columns.clone();
        meta.extend(extra);
        Self::from_columns(meta, &cols)
    }
}

/// k − 1 indicator columns per variable against its lowest level.
pub fn dummy_encode(ds: &DiscreteDataset, variables: &[&str]) -> Result<DesignMatrix> {
    let mut meta = Vec::new();
    let mut values = Vec::new();
    for &name in variables {
        let v = ds.index_of(name).ok_or_else(|| Error::Lookup {
            kind: "variable",
            id: name.to_string(),
        })?;
        let var = &ds.variables[v];
        let label = |l: usize| {
            var.labels
                .get(l)
                .cloned()
                .unwrap_or_else(|| format!("level {l}"))
        };
        let codes = &ds.columns[v];
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= var.levels) {
            return Err(Error::domain(format!(
                "level {bad} of `{name}` is outside its {} levels",
                var.levels
            )));
        }
        for l in 1..var.levels {
            meta.push(ColumnMeta {
                name: format!("{name} {}", label(l)),
                source: name.to_string(),
                level: Some(label(l)),
                reference: Some(label(0)),
            });
            values.push(
                codes
                    .iter()
                    .map(|&c| f64::from(u8::from(c as usize == l)))
                    .collect(),
            );
        }
    }
    if meta.is_empty() {
        return Ok(DesignMatrix::intercept_only(ds.n_rows()));
    }
    DesignMatrix::from_columns(meta, &values)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    #[default]
    None,
    L1,
    L2,
}

impl Penalty {
    pub fn value(self, beta: &[f64]) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::L1 => beta.iter().map(|b| b.abs()).sum(),
            Penalty::L2 => 0.5 * beta.iter().map(|b| b * b).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub columns: Vec<ColumnMeta>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub penalty: Penalty,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted probabilities reached 0 or 1 and coefficients diverge.
    #[serde(default)]
    pub separation: bool,
    /// Wald standard errors (intercept first) for unpenalized fits.
    #[serde(default)]
    pub std_errors: Option<Vec<f64>>,
}

impl LogisticModel {
    pub fn null(columns: Vec<ColumnMeta>, intercept: f64) -> Self {
        let p = columns.len();
        Self {
            columns,
            intercept,
            coefficients: vec![0.0; p],
            penalty: Penalty::None,
            lambda: 0.0,
            iterations: 0,
            converged: true,
            separation: false,
            std_errors: None,
        }
    }

    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: row.len(),
            });
        }
        Ok(self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>())
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        (0..x.n_rows())
            .map(|i| predict_prob(self, x.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Wald z for coefficient `j` (not the intercept), when standard errors exist.
    pub fn wald_z(&self, j: usize) -> Option<f64> {
        self.std_errors
            .as_ref()
            .map(|se| self.coefficients[j] / se[j + 1])
    }

    /// Coefficient table grouped by source variable; reference levels are
    /// listed with a dash.
    pub fn coefficient_table(&self) -> String {
        let mut rows: Vec<(String, String)> =
            vec![("Intercept".into(), format!("{:.4}", self.intercept))];
        let mut last_source: Option<&str> = None;
        for (c, b) in self.columns.iter().zip(&self.coefficients) {
            if last_source != Some(c.source.as_str()) {
                if let Some(r) = &c.reference {
                    rows.push((format!("{} {r}", c.source), "ref".into()));
                }
                last_source = Some(&c.source);
            }
            rows.push((c.name.clone(), format!("{b:.4}")));
        }
        let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
        let mut s = String::new();
        writeln!(s, "{:<width$}  {:>10}", "Variable", "Beta").unwrap();
        for (name, b) in rows {
            writeln!(s, "{name:<width$}  {b:>10}").unwrap();
        }
        s
    }
}

pub fn predict_prob(model: &LogisticModel, row: &[f64]) -> Result<f64> {
    model.linear_predictor(row).map(logistic)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(1e-15, 1.0 - 1e-15)
}

/// Mean binomial deviance, −(2/n)·Σ log-likelihood.
pub fn mean_deviance(probs: &[f64], labels: &[u8]) -> f64 {
    let s: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    -2.0 * s / probs.len() as f64
}

pub fn log_likelihood(model: &LogisticModel, x: &DesignMatrix, labels: &[u8]) -> Result<f64> {
    let p = model.predict(x)?;
    Ok(-0.5 * mean_deviance(&p, labels) * p.len() as f64)
}

fn check_labels(x: &DesignMatrix, labels: &[u8]) -> Result<()> {
    if labels.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::domain("labels must be 0 or 1"));
    }
    if labels.is_empty() {
        return Err(Error::domain("no rows to fit"));
    }
    Ok(())
}

/// Weighted normal-equation pieces `XᵀWX` and `XᵀWz` with a leading intercept.
fn weighted_system(
    x: &DesignMatrix,
    labels: &[u8],
    beta: &[f64],
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let p = x.n_cols() + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut dev = 0.0;
    let mut xi = vec![1.0; p];
    for i in 0..x.n_rows() {
        xi[1..].copy_from_slice(x.row(i));
        let eta: f64 = xi.iter().zip(beta).map(|(u, v)| u * v).sum();
        let mu = logistic(eta);
        let w = mu * (1.0 - mu);
        let y = f64::from(labels[i]);
        let pm = clamp_prob(mu);
        dev -= 2.0
            * if labels[i] == 1 {
                pm.ln()
            } else {
                (1.0 - pm).ln()
            };
        let zw = w * eta + (y - mu);
        for r in 0..p {
            let wr = w * xi[r];
            b[r] += xi[r] * zw;
            for c in r..p {
                a[(r, c)] += wr * xi[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
    }
    (a, b, dev)
}

/// Cholesky solve that treats a vanishing pivot as collinearity.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = a.clone().cholesky().ok_or(Error::Collinearity)?;
    let l = chol.l();
    for j in 0..a.nrows() {
        if a[(j, j)] <= 0.0 || l[(j, j)].powi(2) < 1e-12 * a[(j, j)] {
            return Err(Error::Collinearity);
        }
    }
    Ok((chol.solve(b), chol.inverse()))
}

/// Unpenalized maximum likelihood by iteratively reweighted least squares.
pub fn irls_fit(x: &DesignMatrix, labels: &[u8]) -> Result<LogisticModel> {
    check_labels(x, labels)?;
    let p = x.n_cols() + 1;
    if x.n_rows() <= p {
        return Err(Error::config(format!(
            "need more rows than parameters ({} <= {p})",
            x.n_rows()
        )));
    }
    let mut beta = vec![0.0; p];
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    for it in 1..=IRLS_MAX_ITER {
        iterations = it;
        let (a, b, dev) = weighted_system(x, labels, &beta);
        if dev < 1e-6 {
            separation = true;
            break;
        }
        let (next, _) = match solve_spd(&a, &b) {
            Ok(s) => s,
            // diverging coefficients drive the weights to zero
            Err(_) if it > 1 && beta.iter().any(|b| b.abs() > 15.0) => {
                separation = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let delta = next
            .iter()
            .zip(&beta)
            .map(|(n, o)| (n - o).abs())
            .fold(0.0, f64::max);
        beta = next.iter().copied().collect();
        if delta < IRLS_TOL {
            converged = true;
            break;
        }
    }
    if !converged && beta.iter().any(|b| b.abs() > 15.0) {
        separation = true;
    }
    let std_errors = if separation {
        None
    } else {
        let (a, b, _) = weighted_system(x, labels, &beta);
        solve_spd(&a, &b)
            .ok()
            .map(|(_, inv)| (0..p).map(|j| inv[(j, j)].sqrt()).collect())
    };
    Ok(LogisticModel {
        columns: x.columns.clone(),
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        penalty: Penalty::None,
        lambda: 0.0,
        iterations,
        converged,
        separation,
        std_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdOptions {
    /// Standardize columns (population sd) before penalizing.
    pub standardize: bool,
    pub tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            tol: CD_TOL,
        }
    }
}

/// Column-major standardized copy of a design.
struct Scaled {
    n: usize,
    cols: Vec<Vec<f64>>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaled {
    fn new(x: &DesignMatrix, standardize: bool) -> Self {
        let n = x.n_rows();
        let mut cols = Vec::with_capacity(x.n_cols());
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for j in 0..x.n_cols() {
            let mut c = x.column(j);
            let (m, s) = if standardize {
                let m = c.iter().sum::<f64>() / n as f64;
                let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                (m, s)
            } else {
                (0.0, 1.0)
            };
            if s > 0.0 {
                c.iter_mut().for_each(|v| *v = (*v - m) / s);
            } else {
                c.iter_mut().for_each(|v| *v = 0.0);
            }
            cols.push(c);
            center.push(m);
            scale.push(s);
        }
        Self {
            n,
            cols,
            center,
            scale,
        }
    }

    /// Back to the original column scale.
    fn unscale(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut intercept = b0;
        let coefs = beta
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if self.scale[j] > 0.0 {
                    intercept -= b * self.center[j] / self.scale[j];
                    b / self.scale[j]
                } else {
                    0.0
                }
            })
            .collect();
        (intercept, coefs)
    }

    fn scale_back(&self, model: &LogisticModel) -> (f64, Vec<f64>) {
        let beta: Vec<f64> = model
            .coefficients
            .iter()
            .zip(&self.scale)
            .map(|(b, s)| b * s)
            .collect();
        let b0 = model.intercept
            + model
                .coefficients
                .iter()
                .zip(&self.center)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        (b0, beta)
    }

    fn null_gradient(&self, labels: &[u8]) -> Vec<f64> {
        let ybar = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.n as f64;
        self.cols
            .iter()
            .map(|c| {
                c.iter()
                    .zip(labels)
                    .map(|(x, &y)| x * (f64::from(y) - ybar))
                    .sum::<f64>()
                    / self.n as f64
            })
            .collect()
    }
}

struct CdState {
    b0: f64,
    beta: Vec<f64>,
}

/// Penalized Newton iterations with cyclic coordinate updates on the
/// standardized scale. Returns (outer iterations, converged).
fn cd_solve(
    s: &Scaled,
    labels: &[u8],
    penalty: Penalty,
    lambda: f64,
    st: &mut CdState,
    tol: f64,
) -> (usize, bool) {
    let n = s.n as f64;
    let p = s.cols.len();
    let mut eta = vec![0.0; s.n];
    let mut w = vec![0.0; s.n];
    let mut r = vec![0.0; s.n];
    let mut v = vec![0.0; p];
    for outer in 1..=CD_MAX_OUTER {
        eta.iter_mut().for_each(|e| *e = st.b0);
        for (j, c) in s.cols.iter().enumerate() {
            if st.beta[j] != 0.0 {
                for (e, x) in eta.iter_mut().zip(c) {
                    *e += st.beta[j] * x;
                }
            }
        }
        for i in 0..s.n {
            let mu = logistic(eta[i]);
            w[i] = (mu * (1.0 - mu)).max(MIN_WEIGHT);
            r[i] = (f64::from(labels[i]) - mu) / w[i];
        }
        let wsum: f64 = w.iter().sum();
        for (j, c) in s.cols.iter().enumerate() {
            v[j] = c.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / n;
        }
        let before_b0 = st.b0;
        let before = st.beta.clone();
        for _ in 0..CD_MAX_INNER {
            let mut maxd: f64 = 0.0;
            let d0 = r.iter().zip(&w).map(|(ri, wi)| ri * wi).sum::<f64>() / wsum;
            if d0 != 0.0 {
                st.b0 += d0;
                r.iter_mut().for_each(|ri| *ri -= d0);
                maxd = maxd.max((wsum / n).sqrt() * d0.abs());
            }
            for j in 0..p {
                if v[j] == 0.0 {
                    continue;
                }
                let c = &s.cols[j];
                let g = c
                    .iter()
                    .zip(&w)
                    .zip(&r)
                    .map(|((x, wi), ri)| x * wi * ri)
                    .sum::<f64>()
                    / n
                    + v[j] * st.beta[j];
                let next = match penalty {
                    Penalty::None => g / v[j],
                    Penalty::L1 => soft_threshold(g, lambda) / v[j],
                    Penalty::L2 => g / (v[j] + lambda),
                };
                let d = next - st.beta[j];
                if d != 0.0 {
                    for (ri, x) in r.iter_mut().zip(c) {
                        *ri -= d * x;
                    }
                    st.beta[j] = next;
                    maxd = maxd.max(v[j].sqrt() * d.abs());
                }
            }
            if maxd < CD_INNER_TOL.min(tol) {
                break;
            }
        }
        let mut change = (wsum / n).sqrt() * (st.b0 - before_b0).abs();
        for j in 0..p {
            change = change.max(v[j].sqrt() * (st.beta[j] - before[j]).abs());
        }
        if change < tol {
            return (outer, true);
        }
    }
    (CD_MAX_OUTER, false)
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    // at λ_max the gradient equals λ up to round-off
    if z.abs() <= g * (1.0 + 1e-12) {
        0.0
    } else if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

fn null_state(labels: &[u8], p: usize) -> CdState {
    let ybar = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64;
    let ybar = ybar.clamp(1e-10, 1.0 - 1e-10);
    CdState {
        b0: (ybar / (1.0 - ybar)).ln(),
        beta: vec![0.0; p],
    }
}

/// Minimizes −(1/n)·loglik + λ·P(β); intercept unpenalized.
pub fn coord_descent_fit(
    x: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    lambda: f64,
    opts: &CdOptions,
) -> Result<LogisticModel> {
    Ok(fit_path(x, labels, penalty, &[lambda], opts)?.remove(0))
}

/// Fits a sequence of λ values with warm starts.
///
/// The path stops early, as glmnet does, once the fit explains 99.9% of the
/// null deviance or successive λ values change the deviance by less than
/// 1e-5 of it, or when a fit fails to converge; the returned vector is then
/// shorter than `lambdas`.
pub fn fit_path(
    x: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    lambdas: &[f64],
    opts: &CdOptions,
) -> Result<Vec<LogisticModel>> {
    check_labels(x, labels)?;
    if let Some(&l) = lambdas.iter().find(|&&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::domain(format!(
            "lambda must be non-negative, got {l}"
        )));
    }
    let s = Scaled::new(x, opts.standardize);
    let mut st = null_state(labels, x.n_cols());
    let null_dev = scaled_deviance(&s, labels, &st);
    let mut prev_dev = null_dev;
    let mut models = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let (iterations, converged) = cd_solve(&s, labels, penalty, lambda, &mut st, opts.tol);
        let (intercept, coefficients) = s.unscale(st.b0, &st.beta);
        models.push(LogisticModel {
            columns: x.columns.clone(),
            intercept,
            coefficients,
            penalty,
            lambda,
            iterations,
            converged,
            separation: false,
            std_errors: None,
        });
        if !converged && models.len() > 1 {
            // diverging towards separation; keep the path up to here
            models.pop();
            break;
        }
        let dev = scaled_deviance(&s, labels, &st);
        if lambdas.len() > 1 && null_dev > 0.0 {
            let explained = 1.0 - dev / null_dev;
            let step = (prev_dev - dev) / null_dev;
            if explained > PATH_MAX_DEV_RATIO || (i >= PATH_MIN_STEPS && step < PATH_MIN_DEV_STEP) {
                break;
            }
        }
        prev_dev = dev;
    }
    Ok(models)
}

fn scaled_deviance(s: &Scaled, labels: &[u8], st: &CdState) -> f64 {
    let mut eta = vec![st.b0; s.n];
    for (j, c) in s.cols.iter().enumerate() {
        if st.beta[j] != 0.0 {
            for (e, x) in eta.iter_mut().zip(c) {
                *e += st.beta[j] * x;
            }
        }
    }
    let p: Vec<f64> = eta.into_iter().map(logistic).collect();
    mean_deviance(&p, labels) * s.n as f64
}

/// Fit at the last λ of `lambdas`, warm-started along the preceding values.
/// If the path stops early the last fit reached is returned, labelled with
/// the requested λ.
pub fn fit_warm(
    x: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    lambdas: &[f64],
    opts: &CdOptions,
) -> Result<LogisticModel> {
    let target = *lambdas
        .last()
        .ok_or_else(|| Error::config("empty lambda sequence"))?;
    let mut m = fit_path(x, labels, penalty, lambdas, opts)?
        .pop()
        .expect("non-empty path");
    m.lambda = target;
    Ok(m)
}

/// Smallest λ at which the L1 solution is the null model; scaled up for L2.
pub fn lambda_max(
    x: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    opts: &CdOptions,
) -> Result<f64> {
    check_labels(x, labels)?;
    let s = Scaled::new(x, opts.standardize);
    let g = s
        .null_gradient(labels)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max);
    Ok(match penalty {
        Penalty::L2 => g * L2_LAMBDA_MAX_FACTOR,
        _ => g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub n_values: usize,
    pub ratio: f64,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            n_values: 100,
            ratio: 1e-4,
        }
    }
}

/// Log-spaced, strictly decreasing from λ_max to λ_max·ratio.
pub fn lambda_path(
    x: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    settings: &PathSettings,
    opts: &CdOptions,
) -> Result<Vec<f64>> {
    if settings.n_values == 0 || !(settings.ratio > 0.0 && settings.ratio < 1.0) {
        return Err(Error::config(
            "path needs n_values >= 1 and ratio in (0, 1)",
        ));
    }
    let top = lambda_max(x, labels, penalty, opts)?;
    if top == 0.0 {
        return Ok(vec![0.0]);
    }
    if settings.n_values == 1 {
        return Ok(vec![top]);
    }
    let step = settings.ratio.ln() / (settings.n_values - 1) as f64;
    Ok((0..settings.n_values)
        .map(|i| top * (step * i as f64).exp())
        .collect())
}

/// Largest KKT violation of an L1 fit, measured on the standardized scale.
pub fn kkt_violation(
    x: &DesignMatrix,
    labels: &[u8],
    model: &LogisticModel,
    opts: &CdOptions,
) -> Result<f64> {
    let s = Scaled::new(x, opts.standardize);
    let (_, beta) = s.scale_back(model);
    let probs = model.predict(x)?;
    let n = labels.len() as f64;
    let resid: Vec<f64> = labels
        .iter()
        .zip(&probs)
        .map(|(&y, p)| f64::from(y) - p)
        .collect();
    let mut worst = (resid.iter().sum::<f64>() / n).abs();
    for (j, c) in s.cols.iter().enumerate() {
        if s.scale[j] == 0.0 {
            continue;
        }
        let g = c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
        let v = match model.penalty {
            Penalty::L1 if beta[j] == 0.0 => (g.abs() - model.lambda).max(0.0),
            Penalty::L1 => (g - model.lambda * beta[j].signum()).abs(),
            Penalty::L2 => (g - model.lambda * beta[j]).abs(),
            Penalty::None => g.abs(),
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvCriterion {
    #[default]
    Deviance,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean held-out deviance (or AUC) per λ.
    pub score: Vec<f64>,
    pub best_index: usize,
    pub best_lambda: f64,
    pub criterion: CvCriterion,
}

/// Chooses λ from the full-data path by mean held-out loss over `fold_of_row`.
#[allow(clippy::too_many_arguments)]
pub fn cv_select_lambda(
    x: &DesignMatrix,
    labels: &[u8],
    fold_of_row: &[usize],
    k: usize,
    penalty: Penalty,
    settings: &PathSettings,
    opts: &CdOptions,
    criterion: CvCriterion,
) -> Result<CvResult> {
    if fold_of_row.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: fold_of_row.len(),
        });
    }
    let mut lambdas = lambda_path(x, labels, penalty, settings, opts)?;
    let full_len = fit_path(x, labels, penalty, &lambdas, opts)?.len();
    lambdas.truncate(full_len);
    let per_fold: Vec<Option<Vec<f64>>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Option<Vec<f64>>> {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| fold_of_row[i] == f);
            if test.is_empty() || train.is_empty() {
                return Ok(None);
            }
            let xt = x.subset(&train);
            let yt: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let xv = x.subset(&test);
            let yv: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            let mut models = fit_path(&xt, &yt, penalty, &lambdas, opts)?;
            // a fold path that stopped early holds its last fit
            while models.len() < lambdas.len() {
                let mut m = models.last().expect("at least one fit").clone();
                m.lambda = lambdas[models.len()];
                models.push(m);
            }
            let mut out = Vec::with_capacity(models.len());
            for m in &models {
                let p = m.predict(&xv)?;
                out.push(match criterion {
                    CvCriterion::Deviance => mean_deviance(&p, &yv),
                    CvCriterion::Auc => match crate::eval::auc(&p, &yv) {
                        Ok(a) => a,
                        Err(_) => return Ok(None),
                    },
                });
            }
            Ok(Some(out))
        })
        .collect::<Result<_>>()?;
    let used: Vec<&Vec<f64>> = per_fold.iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::config("no usable cross-validation folds"));
    }
    let score: Vec<f64> = (0..lambdas.len())
        .map(|l| used.iter().map(|f| f[l]).sum::<f64>() / used.len() as f64)
        .collect();
    let better = |a: f64, b: f64| match criterion {
        CvCriterion::Deviance => a < b,
        CvCriterion::Auc => a > b,
    };
    let mut best_index = 0;
    for l in 1..score.len() {
        if better(score[l], score[best_index]) {
            best_index = l;
        }
    }
    Ok(CvResult {
        best_lambda: lambdas[best_index],
        lambdas,
        score,
        best_index,
        criterion,
    })
}
