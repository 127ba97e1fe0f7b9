//! Linear quantile regression.
//!
//! Coefficients minimize the pinball (check) loss
//! `sum_i rho_tau(y_i - x_i' beta)` with `rho_tau(u) = u (tau - I(u <= 0))`.
//!
//! The solver runs in two stages:
//!
//! 1. Majorize-minimize on a smoothed check function: each outer iteration
//!    solves a weighted least-squares problem with weights `1 / (2 max(|r_i|, h))`
//!    and a linear `(tau - 1/2)` tilt, shrinking `h` geometrically. Iteration stops
//!    once the exact pinball objective changes by less than `tol` (relative).
//! 2. Vertex polish: starting from the `q` observations closest to the smoothed
//!    fit, an exact descent along the edges of the linear program (the
//!    simplex method for the check loss, with exact line search by weighted
//!    median) moves to an optimal basic solution. A basic solution with no
//!    improving edge is a global minimizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Covariate matrix of a linear model. Column 0 is all ones when
/// `intercept` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
    intercept: bool,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>, intercept: bool) -> Result<Self> {
        let q = values.ncols();
        if names.len() != q {
            return Err(Error::invalid(format!(
                "{} column names for {q} columns",
                names.len()
            )));
        }
        if q == 0 {
            return Err(Error::invalid("design matrix has no columns"));
        }
        for (j, name) in names.iter().enumerate() {
            if names[..j].contains(name) {
                return Err(Error::invalid(format!("duplicate column name \"{name}\"")));
            }
            if let Some(i) = values.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite value in column \"{name}\" at row {i}"
                )));
            }
        }
        if intercept && values.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("intercept column is not identically 1"));
        }
        Ok(DesignMatrix {
            values,
            names,
            intercept,
        })
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, 1, 1.0), vec!["(Intercept)".into()], true)
    }

    /// Builds from row-major values.
    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>, intercept: bool) -> Result<Self> {
        let q = names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != q) {
            return Err(Error::invalid(format!("row {bad} does not have {q} values")));
        }
        let values = DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]);
        Self::new(values, names, intercept)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Rejects designs that cannot be estimated: fewer than `q + 1` rows, or
    /// rank deficiency (naming the dependent columns).
    pub fn check_rank(&self) -> Result<()> {
        let (n, q) = self.values.shape();
        if n < q + 1 {
            return Err(Error::invalid(format!(
                "design needs at least {} rows for {q} columns, got {n}",
                q + 1
            )));
        }
        let dependent = linalg::dependent_columns(&self.values);
        if dependent.is_empty() {
            Ok(())
        } else {
            Err(Error::SingularDesign {
                columns: dependent.into_iter().map(|j| self.names[j].clone()).collect(),
            })
        }
    }

    /// Linear predictor `X beta`.
    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        (&self.values * DVector::from_column_slice(beta)).data.into()
    }
}

/// Check-function loss `rho_tau(u) = u (tau - I(u <= 0))`.
pub fn pinball_loss(u: f64, tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    if !u.is_finite() {
        return Err(Error::invalid(format!("residual must be finite, got {u}")));
    }
    Ok(check(u, tau))
}

#[inline]
fn check(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

pub(crate) fn validate_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// Sum of check losses of the residuals.
pub fn pinball_objective(residuals: &[f64], tau: f64) -> f64 {
    residuals.iter().map(|&r| check(r, tau)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative objective change that ends the smoothing stage.
    pub tol: f64,
    /// Outer iterations of the smoothing stage.
    pub max_iter: usize,
    /// Edge moves allowed in the vertex stage; exceeding it is a
    /// non-convergence error.
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 500,
            max_pivots: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    pub tau: f64,
    pub beta: Vec<f64>,
    pub names: Vec<String>,
    pub residuals: Vec<f64>,
    pub objective: f64,
    /// Smoothing iterations plus vertex moves.
    pub iterations: usize,
    pub converged: bool,
}

impl QuantileFit {
    pub fn n_negative(&self) -> usize {
        self.residuals.iter().filter(|&&r| r < 0.0).count()
    }

    pub fn n_positive(&self) -> usize {
        self.residuals.iter().filter(|&&r| r > 0.0).count()
    }
}

pub fn fit_quantile_regression(x: &DesignMatrix, y: &[f64], tau: f64) -> Result<QuantileFit> {
    fit_quantile_regression_with(x, y, tau, &SolverOptions::default())
}

pub fn fit_quantile_regression_with(
    x: &DesignMatrix,
    y: &[f64],
    tau: f64,
    opts: &SolverOptions,
) -> Result<QuantileFit> {
    validate_tau(tau)?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::invalid(format!(
            "response has {} values, design has {n} rows",
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite response at row {i}")));
    }
    x.check_rank()?;

    let xm = x.values();
    let yv = DVector::from_column_slice(y);
    let scale = response_scale(y);

    let (smooth_beta, smooth_iters) = smoothed_fit(xm, &yv, tau, scale, opts);
    let vertex = polish_vertex(xm, &yv, tau, &smooth_beta, opts)?;

    let fitted = xm * &vertex.beta;
    let mut residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    for &i in &vertex.basis {
        residuals[i] = 0.0;
    }
    // Points lying on the fitted hyperplane up to rounding report an exact zero.
    for i in 0..n {
        if residuals[i].abs() <= 64.0 * f64::EPSILON * (y[i].abs() + fitted[i].abs()) {
            residuals[i] = 0.0;
        }
    }
    let objective = pinball_objective(&residuals, tau);

    Ok(QuantileFit {
        tau,
        beta: vertex.beta.iter().copied().collect(),
        names: x.names().to_vec(),
        residuals,
        objective,
        iterations: smooth_iters + vertex.pivots,
        converged: true,
    })
}

/// Residual sign indicators: 1 when the residual is `<= 0`, else 0.
pub fn residual_signs(fit: &QuantileFit) -> Vec<u8> {
    fit.residuals.iter().map(|&r| u8::from(r <= 0.0)).collect()
}

fn response_scale(y: &[f64]) -> f64 {
    let med = crate::data::median(y);
    let mad = y.iter().map(|v| (v - med).abs()).sum::<f64>() / y.len() as f64;
    if mad > 0.0 {
        mad
    } else if med != 0.0 {
        med.abs()
    } else {
        1.0
    }
}

fn weighted_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    tilt: f64,
) -> Option<DVector<f64>> {
    let (n, q) = x.shape();
    let mut xtwx = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for i in 0..n {
        let row = x.row(i);
        let w = weights[i];
        for a in 0..q {
            let xa = row[a];
            rhs[a] += xa * (w * y[i] + tilt);
            for b in 0..=a {
                xtwx[(a, b)] += w * xa * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xtwx[(b, a)] = xtwx[(a, b)];
        }
    }
    linalg::solve_spd(xtwx, &rhs)
}

fn smoothed_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    scale: f64,
    opts: &SolverOptions,
) -> (DVector<f64>, usize) {
    let n = x.nrows();
    let ones = vec![1.0; n];
    let mut beta = weighted_solve(x, y, &ones, 0.0).unwrap_or_else(|| DVector::zeros(x.ncols()));
    let mut residuals = y - x * &beta;
    let mut objective = pinball_objective(residuals.as_slice(), tau);
    let mut best = (objective, beta.clone());

    let h_floor = scale * 1e-9;
    let mut h = scale;
    let mut weights = vec![0.0; n];
    let mut iters = 0;
    while iters < opts.max_iter {
        iters += 1;
        for i in 0..n {
            weights[i] = 0.5 / residuals[i].abs().max(h);
        }
        let Some(next) = weighted_solve(x, y, &weights, tau - 0.5) else {
            break;
        };
        beta = next;
        residuals = y - x * &beta;
        let next_obj = pinball_objective(residuals.as_slice(), tau);
        if next_obj < best.0 {
            best = (next_obj, beta.clone());
        }
        let change = (objective - next_obj).abs() / objective.abs().max(f64::MIN_POSITIVE);
        objective = next_obj;
        if h <= h_floor && change < opts.tol {
            break;
        }
        h = (h * 0.5).max(h_floor);
    }
    (best.1, iters)
}

struct Vertex {
    beta: DVector<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

fn basic_solution(x: &DMatrix<f64>, y: &DVector<f64>, basis: &[usize]) -> Option<DVector<f64>> {
    let q = x.ncols();
    let xb = DMatrix::from_fn(q, q, |r, c| x[(basis[r], c)]);
    let yb = DVector::from_fn(q, |r, _| y[basis[r]]);
    xb.lu().solve(&yb)
}

fn polish_vertex(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    start: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Vertex> {
    let (n, q) = x.shape();
    let start_res = y - x * start;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| start_res[a].abs().total_cmp(&start_res[b].abs()));
    let mut basis = linalg::independent_rows(x, &order).ok_or_else(|| Error::SingularDesign {
        columns: vec!["<rows>".into()],
    })?;

    let mut beta = basic_solution(x, y, &basis).ok_or_else(|| Error::NonConvergence {
        iterations: 0,
        last: start.iter().copied().collect(),
    })?;
    let mut residuals = y - x * &beta;
    for &i in &basis {
        residuals[i] = 0.0;
    }
    let mut objective = pinball_objective(residuals.as_slice(), tau);

    let mut pivots = 0;
    let mut breakpoints: Vec<(f64, usize)> = Vec::with_capacity(n);
    loop {
        let xb = DMatrix::from_fn(q, q, |r, c| x[(basis[r], c)]);
        let Some(xb_inv) = xb.try_inverse() else {
            return Err(Error::NonConvergence {
                iterations: pivots,
                last: beta.iter().copied().collect(),
            });
        };

        // Best edge: (objective, leaving position, entering row, step).
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for k in 0..q {
            let direction = xb_inv.column(k);
            let a = x * direction;
            breakpoints.clear();
            let mut slope = 0.0;
            for i in 0..n {
                let ai = if basis.contains(&i) {
                    if basis[k] == i {
                        1.0
                    } else {
                        continue;
                    }
                } else {
                    a[i]
                };
                if ai == 0.0 {
                    continue;
                }
                slope -= ai.abs() * if ai > 0.0 { tau } else { 1.0 - tau };
                breakpoints.push((residuals[i] / ai, i));
            }
            breakpoints.sort_by(|l, r| l.0.total_cmp(&r.0));
            let mut step = None;
            for &(t, i) in &breakpoints {
                let ai = if i == basis[k] { 1.0 } else { a[i] };
                slope += ai.abs();
                if slope >= 0.0 {
                    step = Some((t, i));
                    break;
                }
            }
            let Some((t, entering)) = step else { continue };
            if t == 0.0 || entering == basis[k] {
                continue;
            }
            let candidate: f64 = (0..n)
                .map(|i| {
                    let ai = if basis.contains(&i) {
                        if basis[k] == i {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        a[i]
                    };
                    let r = if i == entering { 0.0 } else { residuals[i] - t * ai };
                    check(r, tau)
                })
                .sum();
            if best.is_none_or(|b| candidate < b.0) {
                best = Some((candidate, k, entering, t));
            }
        }

        match best {
            Some((candidate, k, entering, _))
                if candidate < objective - 1e-13 * objective.abs().max(1.0) =>
            {
                if pivots >= opts.max_pivots {
                    return Err(Error::NonConvergence {
                        iterations: pivots,
                        last: beta.iter().copied().collect(),
                    });
                }
                pivots += 1;
                basis[k] = entering;
                match basic_solution(x, y, &basis) {
                    Some(b) => beta = b,
                    None => {
                        return Err(Error::NonConvergence {
                            iterations: pivots,
                            last: beta.iter().copied().collect(),
                        })
                    }
                }
                residuals = y - x * &beta;
                for &i in &basis {
                    residuals[i] = 0.0;
                }
                objective = pinball_objective(residuals.as_slice(), tau);
            }
            _ => break,
        }
    }
    Ok(Vertex {
        beta,
        basis,
        pivots,
    })
}
