//! The two-step procedure: quantile regression of each response, sign
//! classification, multinomial model of the labels, and φ̂(x) on a grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{apply_recipe, build_design, BasisRecipe, TermSpec};
use crate::concordance::{self, classify, CellProbabilities, ConcordanceLabel, PhiBounds};
use crate::data::{median, Dataset};
use crate::error::{Error, Result};
use crate::multinomial::{fit_multinomial, predict_cells, MultinomialFit};
use crate::qr::{fit_quantile_regression, residual_signs, validate_tau, QuantileFit};

/// Points in an automatically generated covariate grid.
pub const DEFAULT_GRID_POINTS: usize = 100;

/// Covariate label of the row evaluated at the held-constant profile.
pub const BASELINE: &str = "baseline";

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

/// One covariate profile: `covariate` varies, everything else is held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub covariate: String,
    /// Explicit evaluation points; otherwise an equally spaced grid over the
    /// observed range (or `{0, 1}` for a binary column).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub n_points: usize,
    /// Values for the other covariates, overriding the median / mode defaults.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub held: BTreeMap<String, f64>,
}

impl GridSpec {
    pub fn new(covariate: &str) -> Self {
        GridSpec {
            covariate: covariate.into(),
            points: None,
            n_points: DEFAULT_GRID_POINTS,
            held: BTreeMap::new(),
        }
    }

    pub fn with_points(covariate: &str, points: Vec<f64>) -> Self {
        GridSpec {
            points: Some(points),
            ..GridSpec::new(covariate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub responses: [String; 2],
    pub taus: Vec<f64>,
    #[serde(default)]
    pub step1: Vec<TermSpec>,
    #[serde(default)]
    pub step2: Vec<TermSpec>,
    #[serde(default)]
    pub merged: bool,
    #[serde(default)]
    pub grids: Vec<GridSpec>,
}

impl AnalysisSpec {
    /// Intercept-only models in both steps.
    pub fn intercept_only(y1: &str, y2: &str, taus: Vec<f64>) -> Self {
        AnalysisSpec {
            responses: [y1.into(), y2.into()],
            taus,
            step1: Vec::new(),
            step2: Vec::new(),
            merged: false,
            grids: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.responses[0] == self.responses[1] {
            return Err(Error::invalid("the two responses must be distinct columns"));
        }
        if self.taus.is_empty() {
            return Err(Error::invalid("no quantile levels given"));
        }
        for &tau in &self.taus {
            validate_tau(tau)?;
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("quantile levels must be strictly increasing"));
        }
        for g in &self.grids {
            if g.covariate == BASELINE {
                return Err(Error::invalid(format!("\"{BASELINE}\" is reserved")));
            }
            if g.points.is_none() && g.n_points < 2 {
                return Err(Error::invalid(format!(
                    "grid for \"{}\" needs at least 2 points",
                    g.covariate
                )));
            }
        }
        Ok(())
    }

    /// Copy with the responses exchanged.
    pub fn swapped(&self) -> Self {
        let mut s = self.clone();
        s.responses.swap(0, 1);
        s
    }

    /// Every raw column the analysis reads.
    pub fn used_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.responses.to_vec();
        let mut push = |c: &str| {
            if !cols.iter().any(|x| x == c) {
                cols.push(c.to_string());
            }
        };
        for t in self.step1.iter().chain(&self.step2) {
            for c in t.columns() {
                push(c);
            }
        }
        for g in &self.grids {
            push(&g.covariate);
            for k in g.held.keys() {
                push(k);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub covariate: String,
    pub value: Option<f64>,
}

/// Covariate profiles at which φ̂ is evaluated. Built once from the analysed
/// data and reused unchanged across bootstrap replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub rows: Vec<GridRow>,
    /// Profile values, one column per step-2 covariate.
    pub profiles: Dataset,
}

fn profile_columns(spec: &AnalysisSpec) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    let mut push = |c: &str| {
        if !cols.iter().any(|x| x == c) {
            cols.push(c.to_string());
        }
    };
    for t in &spec.step2 {
        for c in t.columns() {
            push(c);
        }
    }
    for g in &spec.grids {
        push(&g.covariate);
    }
    cols
}

/// Median for continuous columns; the most frequent value (ties to 0) for
/// 0/1 columns.
fn typical_value(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == 0.0 || v == 1.0) {
        let ones = values.iter().filter(|&&v| v == 1.0).count();
        f64::from(u8::from(2 * ones > values.len()))
    } else {
        median(values)
    }
}

impl EvaluationGrid {
    pub fn build(data: &Dataset, spec: &AnalysisSpec) -> Result<Self> {
        let columns = profile_columns(spec);
        let mut baseline = Vec::with_capacity(columns.len());
        for c in &columns {
            let values = data.column(c)?;
            if values.is_empty() {
                return Err(Error::invalid("cannot build a grid from an empty dataset"));
            }
            baseline.push(typical_value(values));
        }

        let mut rows = vec![GridRow {
            covariate: BASELINE.into(),
            value: None,
        }];
        let mut profiles: Vec<Vec<f64>> = vec![baseline.clone()];
        for g in &spec.grids {
            let values = data.column(&g.covariate)?;
            let points = match &g.points {
                Some(p) => p.clone(),
                None if values.iter().all(|&v| v == 0.0 || v == 1.0) => vec![0.0, 1.0],
                None => {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let m = g.n_points;
                    (0..m)
                        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                        .collect()
                }
            };
            let mut held = baseline.clone();
            for (name, &v) in &g.held {
                match columns.iter().position(|c| c == name) {
                    Some(j) => held[j] = v,
                    None => {
                        return Err(Error::invalid(format!(
                            "held covariate \"{name}\" is not used by the step-2 model"
                        )))
                    }
                }
            }
            let j = columns
                .iter()
                .position(|c| c == &g.covariate)
                .expect("grid covariates are profile columns");
            for p in points {
                let mut row = held.clone();
                row[j] = p;
                profiles.push(row);
                rows.push(GridRow {
                    covariate: g.covariate.clone(),
                    value: Some(p),
                });
            }
        }

        let profile_data = Dataset::new(
            columns
                .iter()
                .enumerate()
                .map(|(j, c)| (c.clone(), profiles.iter().map(|r| r[j]).collect()))
                .collect(),
        )?;
        let profiles = if columns.is_empty() {
            Dataset::with_row_ids(Vec::<(String, Vec<f64>)>::new(), (0..rows.len()).collect())?
        } else {
            profile_data
        };
        Ok(EvaluationGrid { rows, profiles })
    }
}

/// Both steps fitted at one quantile level.
#[derive(Debug, Clone)]
pub struct TwoStepFit {
    pub tau: f64,
    pub responses: [String; 2],
    pub step1: [QuantileFit; 2],
    pub step1_recipe: BasisRecipe,
    pub labels: Vec<ConcordanceLabel>,
    pub step2: MultinomialFit,
    pub step2_recipe: BasisRecipe,
}

impl TwoStepFit {
    /// Fraction of observations at or below the fitted quantile, per response.
    pub fn sign_margins(&self) -> [f64; 2] {
        self.step1.each_ref().map(|f| {
            residual_signs(f).iter().map(|&w| f64::from(w)).sum::<f64>() / f.residuals.len() as f64
        })
    }

    pub fn surface(&self, grid: &EvaluationGrid) -> Result<PhiSurface> {
        let design = apply_recipe(&self.step2_recipe, &grid.profiles)
            .map_err(|e| e.in_step("step 2 grid"))?;
        let extrapolated = self.step2_recipe.extrapolated_rows(&grid.profiles)?;
        let bounds = concordance::phi_bounds(self.tau)?;
        let rows = grid
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cells = predict_cells(&self.step2, &design.row(i))?;
                let phi_hat = concordance::phi(&cells);
                Ok(SurfaceRow {
                    covariate: r.covariate.clone(),
                    value: r.value,
                    cells,
                    phi_hat,
                    out_of_bounds: phi_hat < bounds.phi_min || phi_hat > bounds.phi_max,
                    extrapolated: extrapolated[i],
                    band: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhiSurface {
            tau: self.tau,
            bounds,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub covariate: String,
    pub value: Option<f64>,
    pub cells: CellProbabilities,
    pub phi_hat: f64,
    /// φ̂ lies outside `[phi_min, phi_max]`; it is reported, never clipped.
    pub out_of_bounds: bool,
    pub extrapolated: bool,
    pub band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSurface {
    pub tau: f64,
    pub bounds: PhiBounds,
    pub rows: Vec<SurfaceRow>,
}

pub fn fit_two_step(data: &Dataset, spec: &AnalysisSpec, tau: f64) -> Result<TwoStepFit> {
    validate_tau(tau)?;
    let (x1, step1_recipe) =
        build_design(data, &spec.step1, true).map_err(|e| e.in_step("step 1 design"))?;
    let fit_one = |name: &str, step: &'static str| -> Result<QuantileFit> {
        let y = data.column(name).map_err(|e| e.in_step(step))?;
        fit_quantile_regression(&x1, y, tau).map_err(|e| e.in_step(step))
    };
    let fit1 = fit_one(&spec.responses[0], "step 1 (first response)")?;
    let fit2 = fit_one(&spec.responses[1], "step 1 (second response)")?;
    let labels = classify(&residual_signs(&fit1), &residual_signs(&fit2))?;

    let (x2, step2_recipe) =
        build_design(data, &spec.step2, true).map_err(|e| e.in_step("step 2 design"))?;
    let step2 = fit_multinomial(&x2, &labels, spec.merged, tau).map_err(|e| e.in_step("step 2"))?;

    Ok(TwoStepFit {
        tau,
        responses: spec.responses.clone(),
        step1: [fit1, fit2],
        step1_recipe,
        labels,
        step2,
        step2_recipe,
    })
}

pub fn run_two_step(data: &Dataset, spec: &AnalysisSpec, tau: f64) -> Result<(TwoStepFit, PhiSurface)> {
    spec.validate()?;
    let grid = EvaluationGrid::build(data, spec)?;
    let fit = fit_two_step(data, spec, tau)?;
    let surface = fit.surface(&grid)?;
    Ok((fit, surface))
}

/// Runs every `tau` of the spec concurrently; results are in `tau` order.
pub fn run_all(data: &Dataset, spec: &AnalysisSpec) -> Result<Vec<(TwoStepFit, PhiSurface)>> {
    spec.validate()?;
    let grid = EvaluationGrid::build(data, spec)?;
    spec.taus
        .par_iter()
        .map(|&tau| {
            let fit = fit_two_step(data, spec, tau)?;
            let surface = fit.surface(&grid)?;
            Ok((fit, surface))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub tau: f64,
    pub covariate: String,
    pub value: Option<f64>,
    pub phi_hat: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub phi_min: f64,
    pub phi_max: f64,
    pub out_of_bounds: bool,
}

/// Long-format rows for one covariate across surfaces.
pub fn phi_profile(surfaces: &[PhiSurface], covariate: &str) -> Result<Vec<ProfileRow>> {
    let rows: Vec<ProfileRow> = surfaces
        .iter()
        .flat_map(|s| {
            s.rows
                .iter()
                .filter(|r| r.covariate == covariate)
                .map(move |r| ProfileRow {
                    tau: s.tau,
                    covariate: r.covariate.clone(),
                    value: r.value,
                    phi_hat: r.phi_hat,
                    ci_lower: r.band.map(|b| b.0),
                    ci_upper: r.band.map(|b| b.1),
                    phi_min: s.bounds.phi_min,
                    phi_max: s.bounds.phi_max,
                    out_of_bounds: r.out_of_bounds,
                })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!("no grid rows for covariate \"{covariate}\"")));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, ScenarioSpec};

    fn gaussian(n: usize, rho: f64, seed: u64) -> Dataset {
        generate(&ScenarioSpec::gaussian(n, rho, seed)).unwrap()
    }

    #[test]
    fn identical_responses_are_perfectly_concordant() {
        let mut d = gaussian(400, 0.3, 1);
        let y1 = d.column("y1").unwrap().to_vec();
        d.set_column("y2", y1).unwrap();
        let spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.5]);
        // Only "00" and "11" occur, so the unmerged model has empty categories.
        let err = run_two_step(&d, &spec, 0.5).unwrap_err();
        assert!(matches!(err.root(), Error::EmptyCategory { .. }));
        let fit = fit_two_step(&d, &AnalysisSpec { merged: true, ..spec.clone() }, 0.5);
        assert!(fit.is_err());
        let labels = {
            let x = crate::qr::DesignMatrix::intercept_only(400).unwrap();
            let f = fit_quantile_regression(&x, d.column("y1").unwrap(), 0.5).unwrap();
            classify(&residual_signs(&f), &residual_signs(&f)).unwrap()
        };
        assert!(labels.iter().all(|l| !l.is_discordant()));
        let cells = concordance::empirical_cells(&labels, 0.5).unwrap();
        // The fitted median interpolates one observation, so p11 = 201/400.
        assert!((concordance::phi(&cells) - 1.0).abs() <= 1.0 / 400.0);
    }

    #[test]
    fn spec_validation() {
        let mut s = AnalysisSpec::intercept_only("a", "a", vec![0.5]);
        assert!(s.validate().is_err());
        s.responses[1] = "b".into();
        s.taus = vec![0.5, 0.5];
        assert!(s.validate().is_err());
        s.taus = vec![0.0];
        assert!(s.validate().is_err());
        s.taus = vec![0.1, 0.9];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn grid_profiles_hold_other_covariates() {
        let d = Dataset::new(vec![
            ("x", (0..11).map(f64::from).collect::<Vec<_>>()),
            ("g", (0..11).map(|i| f64::from(u8::from(i < 7))).collect()),
        ])
        .unwrap();
        let mut spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.5]);
        spec.step2 = vec![TermSpec::identity("x"), TermSpec::identity("g")];
        spec.grids = vec![GridSpec {
            n_points: 3,
            ..GridSpec::new("x")
        }];
        let grid = EvaluationGrid::build(&d, &spec).unwrap();
        assert_eq!(grid.rows.len(), 4);
        assert_eq!(grid.profiles.column("x").unwrap(), &[5.0, 0.0, 5.0, 10.0]);
        assert_eq!(grid.profiles.column("g").unwrap(), &[1.0; 4]);

        spec.grids[0].held.insert("g".into(), 0.0);
        let grid = EvaluationGrid::build(&d, &spec).unwrap();
        assert_eq!(grid.profiles.column("g").unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn profile_table_carries_bounds() {
        let d = generate(&ScenarioSpec {
            covariates: vec![crate::synthetic::CovariateSpec {
                name: "x".into(),
                generator: crate::synthetic::Generator::Uniform { low: 0.0, high: 1.0 },
            }],
            ..ScenarioSpec::gaussian(600, 0.4, 3)
        })
        .unwrap();
        let mut spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.1]);
        spec.step2 = vec![TermSpec::identity("x")];
        spec.grids = vec![GridSpec::with_points("x", vec![0.1, 0.5, 0.9])];
        let (_, surface) = run_two_step(&d, &spec, 0.1).unwrap();
        let table = phi_profile(&[surface], "x").unwrap();
        assert_eq!(table.len(), 3);
        for row in &table {
            assert!((row.phi_min + 1.0 / 9.0).abs() < 1e-15);
            assert_eq!(row.phi_max, 1.0);
            assert!(row.ci_lower.is_none() && row.ci_upper.is_none());
        }
    }

    #[test]
    fn unknown_profile_covariate() {
        let d = gaussian(300, 0.2, 4);
        let spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.5]);
        let (_, surface) = run_two_step(&d, &spec, 0.5).unwrap();
        assert!(phi_profile(&[surface.clone()], "age").is_err());
        assert_eq!(phi_profile(&[surface], BASELINE).unwrap().len(), 1);
    }

    #[test]
    fn surface_phi_recomputable_from_cells() {
        let d = gaussian(500, 0.6, 5);
        let spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.3]);
        let (_, surface) = run_two_step(&d, &spec, 0.3).unwrap();
        for r in &surface.rows {
            assert!((concordance::phi(&r.cells) - r.phi_hat).abs() < 1e-12);
        }
    }

    #[test]
    fn errors_carry_step_provenance() {
        let d = gaussian(300, 0.2, 6);
        let mut spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.5]);
        spec.step2 = vec![TermSpec::identity("missing")];
        let err = run_two_step(&d, &spec, 0.5).unwrap_err();
        assert!(err.to_string().contains("missing"));
        spec.step2.clear();
        spec.step1 = vec![TermSpec::identity("nope")];
        let err = fit_two_step(&d, &spec, 0.5).unwrap_err();
        assert!(matches!(err, Error::Step { step: "step 1 design", .. }));
    }
}
