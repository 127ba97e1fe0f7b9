//! Multinomial logistic regression for the concordance label, with "00" as
//! the reference category:
//!
//! `log(P(Z = z | x) / P(Z = "00" | x)) = x' gamma_z`.
//!
//! Fitting is Newton-Raphson on the full likelihood with step halving. In
//! merged mode the two discordant labels are pooled into one category; the
//! pooled probability is split evenly between "01" and "10" only when
//! predicting.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::concordance::{label_counts, CellProbabilities, ConcordanceLabel};
use crate::error::{Error, Result};
use crate::qr::{validate_tau, DesignMatrix};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;
/// Coefficient magnitude (per standard deviation of its covariate) taken as
/// a sign of complete separation.
const SEPARATION_LIMIT: f64 = 30.0;

/// Non-reference outcome category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Label(ConcordanceLabel),
    /// "01" and "10" pooled.
    Discordant,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Label(l) => write!(f, "{l}"),
            Category::Discordant => f.write_str("01+10"),
        }
    }
}

fn categories(merged: bool) -> Vec<Category> {
    if merged {
        vec![Category::Label(ConcordanceLabel::Below), Category::Discordant]
    } else {
        vec![
            Category::Label(ConcordanceLabel::Below),
            Category::Label(ConcordanceLabel::AboveBelow),
            Category::Label(ConcordanceLabel::BelowAbove),
        ]
    }
}

/// Outcome index: 0 for the reference, `c + 1` for `categories[c]`.
fn outcome_index(label: ConcordanceLabel, merged: bool) -> usize {
    match (label, merged) {
        (ConcordanceLabel::Above, _) => 0,
        (ConcordanceLabel::Below, _) => 1,
        (ConcordanceLabel::AboveBelow, _) => 2,
        (ConcordanceLabel::BelowAbove, false) => 3,
        (ConcordanceLabel::BelowAbove, true) => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub categories: Vec<Category>,
    pub term_names: Vec<String>,
    /// One coefficient vector per non-reference category.
    pub gamma: Vec<Vec<f64>>,
    pub tau: f64,
    pub merged: bool,
    pub loglik: f64,
    /// Log-likelihood at the start and after every Newton step.
    pub loglik_trace: Vec<f64>,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when a coefficient grows beyond the separation limit.
    pub separation_warning: bool,
    /// Inverse observed information, parameters ordered category-major.
    #[serde(skip)]
    pub vcov: Option<DMatrix<f64>>,
}

impl MultinomialFit {
    /// Standard errors from `vcov`, shaped like `gamma`.
    pub fn standard_errors(&self) -> Option<Vec<Vec<f64>>> {
        let v = self.vcov.as_ref()?;
        let q = self.term_names.len();
        Some(
            (0..self.categories.len())
                .map(|c| (0..q).map(|j| v[(c * q + j, c * q + j)].max(0.0).sqrt()).collect())
                .collect(),
        )
    }
}

struct Evaluation {
    loglik: f64,
    gradient: DVector<f64>,
    hessian: Option<DMatrix<f64>>,
}

/// Log-likelihood, gradient and optionally the Hessian at `theta`
/// (category-major flattening of gamma).
fn evaluate(
    x: &DMatrix<f64>,
    outcomes: &[usize],
    k: usize,
    theta: &DVector<f64>,
    with_hessian: bool,
) -> Evaluation {
    let (n, q) = x.shape();
    let mut loglik = 0.0;
    let mut gradient = DVector::zeros(k * q);
    let mut hessian = with_hessian.then(|| DMatrix::zeros(k * q, k * q));
    let mut eta = vec![0.0; k + 1];
    let mut p = vec![0.0; k + 1];
    for i in 0..n {
        let xi = x.row(i);
        for c in 0..k {
            eta[c + 1] = (0..q).map(|j| xi[j] * theta[c * q + j]).sum();
        }
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = eta.iter().map(|e| (e - shift).exp()).sum();
        let log_denom = shift + denom.ln();
        for c in 0..=k {
            p[c] = (eta[c] - log_denom).exp();
        }
        loglik += eta[outcomes[i]] - log_denom;
        for c in 0..k {
            let resid = f64::from(u8::from(outcomes[i] == c + 1)) - p[c + 1];
            for j in 0..q {
                gradient[c * q + j] += resid * xi[j];
            }
        }
        if let Some(h) = hessian.as_mut() {
            for c in 0..k {
                for d in 0..=c {
                    let w = p[c + 1] * (f64::from(u8::from(c == d)) - p[d + 1]);
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..q {
                        for b in 0..q {
                            h[(c * q + a, d * q + b)] -= w * xi[a] * xi[b];
                        }
                    }
                }
            }
        }
    }
    if let Some(h) = hessian.as_mut() {
        for c in 0..k {
            for d in 0..c {
                for a in 0..q {
                    for b in 0..q {
                        h[(d * q + b, c * q + a)] = h[(c * q + a, d * q + b)];
                    }
                }
            }
        }
    }
    Evaluation {
        loglik,
        gradient,
        hessian,
    }
}

fn flatten(gamma: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        gamma.iter().map(Vec::len).sum(),
        gamma.iter().flatten().copied(),
    )
}

fn outcomes(z: &[ConcordanceLabel], merged: bool) -> Vec<usize> {
    z.iter().map(|&l| outcome_index(l, merged)).collect()
}

/// Analytic gradient of the log-likelihood, category-major.
pub fn loglik_gradient(
    gamma: &[Vec<f64>],
    x2: &DesignMatrix,
    z: &[ConcordanceLabel],
    merged: bool,
) -> Result<Vec<f64>> {
    let k = categories(merged).len();
    check_shapes(gamma, k, x2, z)?;
    let eval = evaluate(x2.values(), &outcomes(z, merged), k, &flatten(gamma), false);
    Ok(eval.gradient.iter().copied().collect())
}

/// Log-likelihood at `gamma`.
pub fn loglik(
    gamma: &[Vec<f64>],
    x2: &DesignMatrix,
    z: &[ConcordanceLabel],
    merged: bool,
) -> Result<f64> {
    let k = categories(merged).len();
    check_shapes(gamma, k, x2, z)?;
    Ok(evaluate(x2.values(), &outcomes(z, merged), k, &flatten(gamma), false).loglik)
}

fn check_shapes(
    gamma: &[Vec<f64>],
    k: usize,
    x2: &DesignMatrix,
    z: &[ConcordanceLabel],
) -> Result<()> {
    if gamma.len() != k || gamma.iter().any(|g| g.len() != x2.n_cols()) {
        return Err(Error::invalid(format!(
            "gamma must be {k} vectors of length {}",
            x2.n_cols()
        )));
    }
    if z.len() != x2.n_rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} design rows",
            z.len(),
            x2.n_rows()
        )));
    }
    Ok(())
}

pub fn fit_multinomial(
    x2: &DesignMatrix,
    z: &[ConcordanceLabel],
    merged: bool,
    tau: f64,
) -> Result<MultinomialFit> {
    validate_tau(tau)?;
    if z.is_empty() {
        return Err(Error::invalid("no concordance labels"));
    }
    if z.len() != x2.n_rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} design rows",
            z.len(),
            x2.n_rows()
        )));
    }
    x2.check_rank()?;

    let cats = categories(merged);
    let k = cats.len();
    let counts = label_counts(z);
    if counts[0] == 0 {
        return Err(Error::EmptyCategory {
            category: "00".into(),
        });
    }
    for cat in &cats {
        let count = match cat {
            Category::Label(l) => counts[l.index()],
            Category::Discordant => counts[2] + counts[3],
        };
        if count == 0 {
            return Err(Error::EmptyCategory {
                category: cat.to_string(),
            });
        }
    }

    let x = x2.values();
    let q = x.ncols();
    let y = outcomes(z, merged);
    let mut theta = DVector::zeros(k * q);
    let mut eval = evaluate(x, &y, k, &theta, true);
    let mut trace = vec![eval.loglik];
    let mut iterations = 0;
    let mut converged = eval.gradient.norm() <= GRADIENT_TOL;

    while !converged && iterations < MAX_ITER {
        let neg_hessian = -eval.hessian.clone().expect("hessian requested");
        let Some(step) = crate::linalg::solve_spd(neg_hessian, &eval.gradient) else {
            break;
        };
        // Near the optimum the gain drops below the resolution of the
        // log-likelihood; a step that shrinks the gradient is still progress.
        let slack = 64.0 * f64::EPSILON * eval.loglik.abs().max(1.0);
        let grad_norm = eval.gradient.norm();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &theta + &step * scale;
            let trial = evaluate(x, &y, k, &candidate, true);
            let better = trial.loglik >= eval.loglik
                || (trial.loglik >= eval.loglik - slack && trial.gradient.norm() < grad_norm);
            if trial.loglik.is_finite() && better {
                accepted = Some((candidate, trial));
                break;
            }
            scale *= 0.5;
        }
        let Some((next_theta, next_eval)) = accepted else {
            break;
        };
        iterations += 1;
        let stalled = next_eval.loglik <= eval.loglik && next_eval.gradient.norm() >= grad_norm;
        theta = next_theta;
        eval = next_eval;
        trace.push(eval.loglik);
        converged = eval.gradient.norm() <= GRADIENT_TOL;
        if stalled {
            break;
        }
    }

    let gamma: Vec<Vec<f64>> = (0..k)
        .map(|c| theta.rows(c * q, q).iter().copied().collect())
        .collect();
    let separation_warning = separation(x, &gamma, x2.has_intercept());
    let vcov = eval.hessian.as_ref().and_then(|h| (-h).try_inverse());

    Ok(MultinomialFit {
        categories: cats,
        term_names: x2.names().to_vec(),
        gamma,
        tau,
        merged,
        loglik: eval.loglik,
        loglik_trace: trace,
        gradient_norm: eval.gradient.norm(),
        converged,
        iterations,
        separation_warning,
        vcov,
    })
}

fn separation(x: &DMatrix<f64>, gamma: &[Vec<f64>], intercept: bool) -> bool {
    let n = x.nrows() as f64;
    (0..x.ncols()).any(|j| {
        let col = x.column(j);
        let spread = if intercept && j == 0 {
            1.0
        } else {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                col.amax()
            }
        };
        gamma.iter().any(|g| (g[j] * spread).abs() > SEPARATION_LIMIT)
    })
}

/// Predicted cells at covariate row `x`.
pub fn predict_cells(fit: &MultinomialFit, x: &[f64]) -> Result<CellProbabilities> {
    let q = fit.term_names.len();
    if x.len() != q {
        return Err(Error::invalid(format!(
            "covariate row has {} values, model has {q} terms",
            x.len()
        )));
    }
    let mut eta = Vec::with_capacity(fit.gamma.len() + 1);
    eta.push(0.0);
    for g in &fit.gamma {
        eta.push(g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
    }
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let (p01, p10) = if fit.merged {
        (p[2] / 2.0, p[2] / 2.0)
    } else {
        (p[2], p[3])
    };
    CellProbabilities::new(p[0], p[1], p01, p10, fit.tau)
}
