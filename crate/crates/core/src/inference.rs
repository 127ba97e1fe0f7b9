//! Paired nonparametric bootstrap of the whole two-step procedure.
//!
//! Each replicate resamples complete rows with replacement and refits both
//! steps from scratch, so first-step variability propagates into the
//! multinomial coefficients and φ̂(x). Replicate `r` draws from its own
//! ChaCha8 stream (`seed`, stream `r`), which makes results independent of
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concordance;
use crate::data::{sorted_quantile, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{fit_two_step, AnalysisSpec, EvaluationGrid, PhiSurface, TwoStepFit};
use crate::qr::validate_tau;
use crate::synthetic::normal_quantile;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.2;
/// Distance kept from the φ bounds before the logit transform.
pub const WINSOR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            level: DEFAULT_LEVEL,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub wald: (f64, f64),
    pub percentile: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiInterval {
    pub lower: f64,
    pub upper: f64,
    /// Standard error of the logit-transformed draws.
    pub se_logit: f64,
    /// Draws (and possibly the estimate) moved inside the open bound range.
    pub winsorized: usize,
    /// Every draw sat on the same bound; the interval collapses to the estimate.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub tau: f64,
    /// Indices of replicates that failed, with the reason.
    pub failed: Vec<(usize, String)>,
    /// Per successful replicate: step-1 coefficients of each response.
    pub beta_draws: Vec<[Vec<f64>; 2]>,
    /// Per successful replicate: step-2 coefficients, category-major.
    pub gamma_draws: Vec<Vec<f64>>,
    /// Per successful replicate: φ̂ at every grid row.
    pub phi_draws: Vec<Vec<f64>>,
    pub step1: [Vec<CoefficientSummary>; 2],
    /// One list per non-reference category.
    pub step2: Vec<Vec<CoefficientSummary>>,
    /// One interval per grid row.
    pub phi: Vec<PhiInterval>,
}

impl BootstrapResult {
    pub fn failures(&self) -> usize {
        self.failed.len()
    }

    pub fn successes(&self) -> usize {
        self.phi_draws.len()
    }

    /// Standard deviation of the φ̂ draws at grid row `row`.
    pub fn phi_se(&self, row: usize) -> f64 {
        let draws: Vec<f64> = self.phi_draws.iter().map(|d| d[row]).collect();
        std_dev(&draws)
    }

    /// Copies the φ̂ intervals into the surface rows.
    pub fn annotate(&self, surface: &mut PhiSurface) {
        for (row, iv) in surface.rows.iter_mut().zip(&self.phi) {
            row.band = Some((iv.lower, iv.upper));
        }
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn validate_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// Row indices of bootstrap replicate `replicate`.
pub fn resample_indices(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn replicate_dataset(data: &Dataset, seed: u64, replicate: usize) -> Dataset {
    data.take_rows(&resample_indices(data.n_rows(), seed, replicate))
}

/// Wald and percentile intervals plus standard error from bootstrap draws.
pub fn summarize(term: &str, estimate: f64, draws: &[f64], level: f64) -> CoefficientSummary {
    let se = std_dev(draws);
    let z = normal_quantile(0.5 + level / 2.0);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let percentile = if sorted.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            sorted_quantile(&sorted, alpha / 2.0),
            sorted_quantile(&sorted, 1.0 - alpha / 2.0),
        )
    };
    CoefficientSummary {
        term: term.into(),
        estimate,
        se,
        wald: (estimate - z * se, estimate + z * se),
        percentile,
    }
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Interval for φ built on the logit of φ rescaled to `(phi_min, phi_max)`.
///
/// `u = (φ − phi_min) / (phi_max − phi_min)` maps the attainable range onto
/// `(0, 1)`. The Wald interval `logit(u_hat) ± z · SE(logit(u*))` is mapped
/// back to the φ scale. Values with `u` outside `[ε, 1 − ε]` are winsorized
/// to that range first.
pub fn phi_interval(draws: &[f64], estimate: f64, tau: f64, level: f64) -> Result<PhiInterval> {
    validate_tau(tau)?;
    validate_level(level)?;
    if draws.is_empty() {
        return Err(Error::invalid("no bootstrap draws"));
    }
    let bounds = concordance::phi_bounds(tau)?;
    let width = bounds.phi_max - bounds.phi_min;
    let to_unit = |phi: f64| (phi - bounds.phi_min) / width;
    let from_unit = |u: f64| bounds.phi_min + u * width;

    let at_lower = draws.iter().all(|&d| to_unit(d) <= 0.0);
    let at_upper = draws.iter().all(|&d| to_unit(d) >= 1.0);
    if at_lower || at_upper {
        return Ok(PhiInterval {
            lower: estimate,
            upper: estimate,
            se_logit: 0.0,
            winsorized: draws.len(),
            degenerate: true,
        });
    }

    let mut winsorized = 0;
    let mut clamp = |u: f64| {
        if u < WINSOR_EPS {
            winsorized += 1;
            WINSOR_EPS
        } else if u > 1.0 - WINSOR_EPS {
            winsorized += 1;
            1.0 - WINSOR_EPS
        } else {
            u
        }
    };
    let transformed: Vec<f64> = draws.iter().map(|&d| logit(clamp(to_unit(d)))).collect();
    let center_u = clamp(to_unit(estimate));
    let center = logit(center_u);
    let se_logit = std_dev(&transformed);
    let z = normal_quantile(0.5 + level / 2.0);

    // A zero-width band stays exactly at the estimate.
    let (lower, upper) = if se_logit == 0.0 {
        (estimate, estimate)
    } else {
        (
            from_unit(expit(center - z * se_logit)),
            from_unit(expit(center + z * se_logit)),
        )
    };
    Ok(PhiInterval {
        lower,
        upper,
        se_logit,
        winsorized,
        degenerate: false,
    })
}

struct Replicate {
    beta: [Vec<f64>; 2],
    gamma: Vec<f64>,
    phi: Vec<f64>,
}

fn run_replicate(
    data: &Dataset,
    spec: &AnalysisSpec,
    tau: f64,
    grid: &EvaluationGrid,
    seed: u64,
    r: usize,
) -> std::result::Result<Replicate, String> {
    let sample = replicate_dataset(data, seed, r);
    let fit = fit_two_step(&sample, spec, tau).map_err(|e| e.to_string())?;
    if !fit.step2.converged {
        return Err("step 2: multinomial fit did not converge".into());
    }
    let surface = fit.surface(grid).map_err(|e| e.to_string())?;
    Ok(Replicate {
        beta: fit.step1.each_ref().map(|f| f.beta.clone()),
        gamma: fit.step2.gamma.iter().flatten().copied().collect(),
        phi: surface.rows.iter().map(|r| r.phi_hat).collect(),
    })
}

/// Bootstraps an existing fit. `grid` must be the grid used for `surface`.
pub fn bootstrap_fit(
    data: &Dataset,
    spec: &AnalysisSpec,
    fit: &TwoStepFit,
    surface: &PhiSurface,
    grid: &EvaluationGrid,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.replicates < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replicates"));
    }
    validate_level(opts.level)?;
    let tau = fit.tau;
    let work = || -> Vec<std::result::Result<Replicate, String>> {
        (0..opts.replicates)
            .into_par_iter()
            .map(|r| run_replicate(data, spec, tau, grid, opts.seed, r))
            .collect()
    };
    let outcomes = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut failed = Vec::new();
    let mut beta_draws = Vec::new();
    let mut gamma_draws = Vec::new();
    let mut phi_draws = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => {
                beta_draws.push(rep.beta);
                gamma_draws.push(rep.gamma);
                phi_draws.push(rep.phi);
            }
            Err(msg) => failed.push((r, msg)),
        }
    }

    let column = |draws: &[Vec<f64>], j: usize| -> Vec<f64> { draws.iter().map(|d| d[j]).collect() };
    let step1 = [0, 1].map(|resp| {
        let draws: Vec<Vec<f64>> = beta_draws.iter().map(|b| b[resp].clone()).collect();
        fit.step1[resp]
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| summarize(name, fit.step1[resp].beta[j], &column(&draws, j), opts.level))
            .collect()
    });
    let q2 = fit.step2.term_names.len();
    let step2 = fit
        .step2
        .gamma
        .iter()
        .enumerate()
        .map(|(c, g)| {
            fit.step2
                .term_names
                .iter()
                .enumerate()
                .map(|(j, name)| summarize(name, g[j], &column(&gamma_draws, c * q2 + j), opts.level))
                .collect()
        })
        .collect();
    let phi = if phi_draws.is_empty() {
        Vec::new()
    } else {
        surface
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| phi_interval(&column(&phi_draws, i), row.phi_hat, tau, opts.level))
            .collect::<Result<Vec<_>>>()?
    };

    let result = BootstrapResult {
        replicates: opts.replicates,
        seed: opts.seed,
        level: opts.level,
        tau,
        failed,
        beta_draws,
        gamma_draws,
        phi_draws,
        step1,
        step2,
        phi,
    };
    if result.failures() as f64 > MAX_FAILURE_RATE * opts.replicates as f64 {
        return Err(Error::InferenceUnreliable {
            failures: result.failures(),
            replicates: opts.replicates,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

/// Fits the two-step model at `tau` and bootstraps it.
pub fn bootstrap(
    data: &Dataset,
    spec: &AnalysisSpec,
    tau: f64,
    opts: &BootstrapOptions,
) -> Result<(TwoStepFit, PhiSurface, BootstrapResult)> {
    spec.validate()?;
    let grid = EvaluationGrid::build(data, spec)?;
    let fit = fit_two_step(data, spec, tau)?;
    let mut surface = fit.surface(&grid)?;
    let result = bootstrap_fit(data, spec, &fit, &surface, &grid, opts)?;
    result.annotate(&mut surface);
    Ok((fit, surface, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_draws_give_zero_width() {
        let iv = phi_interval(&[0.3; 50], 0.3, 0.5, 0.95).unwrap();
        assert!((iv.lower - 0.3).abs() < 1e-12 && (iv.upper - 0.3).abs() < 1e-12);
        assert!(!iv.degenerate);
    }

    #[test]
    fn symmetric_draws_at_median_contain_zero() {
        let draws: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.01).collect();
        let iv = phi_interval(&draws, 0.0, 0.5, 0.95).unwrap();
        assert!((iv.lower + iv.upper).abs() < 1e-12);
        assert!(iv.lower < 0.0 && iv.upper > 0.0);
    }

    #[test]
    fn boundary_draws() {
        let iv = phi_interval(&[1.0, 1.2, 1.0], 1.0, 0.3, 0.9).unwrap();
        assert!(iv.degenerate);
        assert_eq!((iv.lower, iv.upper), (1.0, 1.0));

        let iv = phi_interval(&[0.5, 1.0, 0.7, 0.2], 0.6, 0.3, 0.9).unwrap();
        assert_eq!(iv.winsorized, 1);
        assert!(iv.lower <= 0.6 && 0.6 <= iv.upper && iv.upper < 1.0);
    }

    #[test]
    fn invalid_interval_arguments() {
        assert!(phi_interval(&[], 0.1, 0.5, 0.95).is_err());
        assert!(phi_interval(&[0.1], 0.1, 0.5, 1.0).is_err());
        assert!(phi_interval(&[0.1], 0.1, 1.0, 0.95).is_err());
    }

    #[test]
    fn resampling_is_reproducible_per_stream() {
        assert_eq!(resample_indices(50, 9, 3), resample_indices(50, 9, 3));
        assert_ne!(resample_indices(50, 9, 3), resample_indices(50, 9, 4));
        assert!(resample_indices(50, 9, 0).iter().all(|&i| i < 50));
    }

    #[test]
    fn summary_intervals() {
        let draws: Vec<f64> = (0..=100).map(f64::from).collect();
        let s = summarize("x", 50.0, &draws, 0.9);
        assert!((s.percentile.0 - 5.0).abs() < 1e-12);
        assert!((s.percentile.1 - 95.0).abs() < 1e-12);
        assert!((s.wald.0 + s.wald.1 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rare_categories_make_the_bootstrap_unreliable() {
        // One row in each discordant category: a resample misses a given row
        // about 37% of the time, so most replicates hit an empty category.
        let y1: Vec<f64> = (1..=60).map(f64::from).collect();
        let mut y2 = y1.clone();
        y2.swap(9, 49);
        let data = Dataset::new(vec![("y1", y1), ("y2", y2)]).unwrap();
        let spec = AnalysisSpec::intercept_only("y1", "y2", vec![0.5]);
        let opts = BootstrapOptions {
            replicates: 100,
            seed: 3,
            ..Default::default()
        };
        match bootstrap(&data, &spec, 0.5, &opts) {
            Err(Error::InferenceUnreliable {
                failures,
                replicates,
                partial,
            }) => {
                assert_eq!(replicates, 100);
                assert!(failures > 20);
                assert_eq!(partial.failures(), failures);
                assert_eq!(partial.successes() + failures, 100);
                assert!(partial.failed.iter().all(|(_, why)| why.contains("no observations")));
            }
            other => panic!("expected an unreliable bootstrap, got {other:?}"),
        }
    }
}
