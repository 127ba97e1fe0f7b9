//! Design matrices built from declared terms.
//!
//! Supported terms are raw columns, centered columns, products of two
//! columns, and natural cubic splines with boundary knots at the observed
//! range and two interior knots at the empirical tertiles. Every
//! data-dependent constant lands in a [`BasisRecipe`], so prediction grids are
//! encoded with the training knots.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{sample_quantile, Dataset};
use crate::error::{Error, Result};
use crate::qr::DesignMatrix;

/// Distinct values a column needs before a spline term is allowed.
pub const MIN_SPLINE_DISTINCT: usize = 8;

/// Number of columns contributed by one spline term.
pub const SPLINE_DF: usize = 3;

pub const INTERCEPT_NAME: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TermSpec {
    Identity { column: String },
    Center { column: String, at: f64 },
    Spline { column: String },
    Interaction { columns: [String; 2] },
}

impl TermSpec {
    pub fn identity(column: &str) -> Self {
        TermSpec::Identity {
            column: column.into(),
        }
    }

    pub fn center(column: &str, at: f64) -> Self {
        TermSpec::Center {
            column: column.into(),
            at,
        }
    }

    pub fn spline(column: &str) -> Self {
        TermSpec::Spline {
            column: column.into(),
        }
    }

    pub fn interaction(a: &str, b: &str) -> Self {
        TermSpec::Interaction {
            columns: [a.into(), b.into()],
        }
    }

    /// Raw data columns the term reads.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            TermSpec::Identity { column }
            | TermSpec::Center { column, .. }
            | TermSpec::Spline { column } => vec![column.as_str()],
            TermSpec::Interaction { columns } => vec![columns[0].as_str(), columns[1].as_str()],
        }
    }
}

/// A term with its data-dependent constants resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedTerm {
    Identity { column: String },
    Center { column: String, at: f64 },
    Spline { column: String, knots: [f64; 4] },
    Interaction { columns: [String; 2] },
}

impl FittedTerm {
    fn column_names(&self) -> Vec<String> {
        match self {
            FittedTerm::Identity { column } => vec![column.clone()],
            FittedTerm::Center { column, at } => vec![format!("({column} - {at})")],
            FittedTerm::Spline { column, .. } => {
                (1..=SPLINE_DF).map(|k| format!("s({column}){k}")).collect()
            }
            FittedTerm::Interaction { columns } => vec![format!("{}:{}", columns[0], columns[1])],
        }
    }

    fn width(&self) -> usize {
        match self {
            FittedTerm::Spline { .. } => SPLINE_DF,
            _ => 1,
        }
    }

    fn fill(&self, data: &Dataset, out: &mut [Vec<f64>]) -> Result<()> {
        match self {
            FittedTerm::Identity { column } => {
                out[0] = finite_column(data, column)?.to_vec();
            }
            FittedTerm::Center { column, at } => {
                out[0] = finite_column(data, column)?.iter().map(|v| v - at).collect();
            }
            FittedTerm::Spline { column, knots } => {
                let basis = NaturalSpline::new(*knots)?;
                for (i, &v) in finite_column(data, column)?.iter().enumerate() {
                    let row = basis.eval(v);
                    for k in 0..SPLINE_DF {
                        out[k][i] = row[k];
                    }
                }
            }
            FittedTerm::Interaction { columns } => {
                let a = finite_column(data, &columns[0])?;
                let b = finite_column(data, &columns[1])?;
                out[0] = a.iter().zip(b).map(|(x, y)| x * y).collect();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRecipe {
    pub intercept: bool,
    pub terms: Vec<FittedTerm>,
    pub names: Vec<String>,
}

impl BasisRecipe {
    /// Raw data columns read by the recipe, in first-use order.
    pub fn raw_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for t in &self.terms {
            let names: Vec<&String> = match t {
                FittedTerm::Identity { column }
                | FittedTerm::Center { column, .. }
                | FittedTerm::Spline { column, .. } => vec![column],
                FittedTerm::Interaction { columns } => columns.iter().collect(),
            };
            for c in names {
                if !cols.contains(c) {
                    cols.push(c.clone());
                }
            }
        }
        cols
    }

    /// Rows of `data` lying outside the boundary knots of some spline term.
    pub fn extrapolated_rows(&self, data: &Dataset) -> Result<Vec<bool>> {
        let mut flags = vec![false; data.n_rows()];
        for t in &self.terms {
            if let FittedTerm::Spline { column, knots } = t {
                for (i, &v) in data.column(column)?.iter().enumerate() {
                    if v < knots[0] || v > knots[3] {
                        flags[i] = true;
                    }
                }
            }
        }
        Ok(flags)
    }
}

fn finite_column<'a>(data: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    let col = data.column(name)?;
    if let Some(i) = col.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidColumn {
            column: name.into(),
            message: format!("non-numeric value at row {}", data.row_ids()[i]),
        });
    }
    Ok(col)
}

fn fit_term(data: &Dataset, term: &TermSpec) -> Result<FittedTerm> {
    Ok(match term {
        TermSpec::Identity { column } => {
            finite_column(data, column)?;
            FittedTerm::Identity {
                column: column.clone(),
            }
        }
        TermSpec::Center { column, at } => {
            finite_column(data, column)?;
            if !at.is_finite() {
                return Err(Error::invalid(format!("centering constant for {column} is {at}")));
            }
            FittedTerm::Center {
                column: column.clone(),
                at: *at,
            }
        }
        TermSpec::Spline { column } => {
            let values = finite_column(data, column)?;
            FittedTerm::Spline {
                column: column.clone(),
                knots: tertile_knots(column, values)?,
            }
        }
        TermSpec::Interaction { columns } => {
            finite_column(data, &columns[0])?;
            finite_column(data, &columns[1])?;
            FittedTerm::Interaction {
                columns: columns.clone(),
            }
        }
    })
}

/// Boundary knots at min/max, interior knots at the 1/3 and 2/3 sample
/// quantiles (linear interpolation definition).
pub fn tertile_knots(column: &str, values: &[f64]) -> Result<[f64; 4]> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < MIN_SPLINE_DISTINCT {
        return Err(Error::InvalidColumn {
            column: column.into(),
            message: format!(
                "spline term needs at least {MIN_SPLINE_DISTINCT} distinct values, found {}",
                distinct.len()
            ),
        });
    }
    let knots = [
        sorted[0],
        sample_quantile(&sorted, 1.0 / 3.0),
        sample_quantile(&sorted, 2.0 / 3.0),
        sorted[sorted.len() - 1],
    ];
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidColumn {
            column: column.into(),
            message: format!("spline knots are not distinct: {knots:?}"),
        });
    }
    Ok(knots)
}

pub fn build_design(
    data: &Dataset,
    terms: &[TermSpec],
    intercept: bool,
) -> Result<(DesignMatrix, BasisRecipe)> {
    let fitted = terms
        .iter()
        .map(|t| fit_term(data, t))
        .collect::<Result<Vec<_>>>()?;
    let mut names = Vec::new();
    if intercept {
        names.push(INTERCEPT_NAME.to_string());
    }
    for t in &fitted {
        names.extend(t.column_names());
    }
    let recipe = BasisRecipe {
        intercept,
        terms: fitted,
        names,
    };
    let design = apply_recipe(&recipe, data)?;
    Ok((design, recipe))
}

/// Encodes `grid` with the recipe's stored constants. Values outside spline
/// boundary knots are extrapolated linearly; see
/// [`BasisRecipe::extrapolated_rows`].
pub fn apply_recipe(recipe: &BasisRecipe, grid: &Dataset) -> Result<DesignMatrix> {
    let n = grid.n_rows();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(recipe.names.len());
    if recipe.intercept {
        columns.push(vec![1.0; n]);
    }
    for t in &recipe.terms {
        let mut block = vec![vec![0.0; n]; t.width()];
        t.fill(grid, &mut block)?;
        columns.extend(block);
    }
    let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    DesignMatrix::new(values, recipe.names.clone(), recipe.intercept)
}

/// Truncated-power natural cubic spline basis on four knots, without the
/// constant. The covariate is rescaled to `[0, 1]` over the boundary knots.
#[derive(Debug, Clone, Copy)]
pub struct NaturalSpline {
    lower: f64,
    width: f64,
    /// Knots on the unit scale.
    knots: [f64; 4],
}

impl NaturalSpline {
    pub fn new(knots: [f64; 4]) -> Result<Self> {
        if knots.windows(2).any(|w| w[0] >= w[1]) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid(format!("knots must be strictly increasing: {knots:?}")));
        }
        let lower = knots[0];
        let width = knots[3] - knots[0];
        Ok(NaturalSpline {
            lower,
            width,
            knots: knots.map(|k| (k - lower) / width),
        })
    }

    fn d(&self, k: usize, u: f64) -> f64 {
        let last = self.knots[3];
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        (cube(u - self.knots[k]) - cube(u - last)) / (last - self.knots[k])
    }

    pub fn eval(&self, x: f64) -> [f64; SPLINE_DF] {
        let u = (x - self.lower) / self.width;
        let d_last = self.d(2, u);
        [u, self.d(0, u) - d_last, self.d(1, u) - d_last]
    }
}
