//! Synthetic bivariate data with known quantile dependence, and the
//! Gaussian-error oracle for φ.
//!
//! Responses follow `y_j = x' beta_j + e_j` where `(e_1, e_2)` is standard
//! bivariate normal with correlation `rho` (optionally depending on a binary
//! covariate). Under this location-shift design the conditional
//! `tau`-quantile of `y_j` is `x' beta_j + z_tau`, so the conditional φ equals
//! `(Phi2(z_tau, z_tau; rho) - tau^2) / (tau (1 - tau))`.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::qr::validate_tau;
use crate::quadrature;

pub const RESPONSE_1: &str = "y1";
pub const RESPONSE_2: &str = "y2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dependence {
    Constant { rho: f64 },
    /// Correlation `rho0` where the binary covariate is 0 and `rho1` where it is 1.
    ByGroup { covariate: String, rho0: f64, rho1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Uniform {
        low: f64,
        high: f64,
    },
    /// Indicator with success probability `p`; `balanced` fixes the number of
    /// ones at `round(n p)` in random order.
    Binary {
        p: f64,
        #[serde(default)]
        balanced: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub dependence: Dependence,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    /// Intercept followed by one coefficient per covariate; empty means zero.
    #[serde(default)]
    pub beta1: Vec<f64>,
    #[serde(default)]
    pub beta2: Vec<f64>,
    /// Probability of swapping the two responses within a row.
    #[serde(default)]
    pub exchange_prob: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn gaussian(n: usize, rho: f64, seed: u64) -> Self {
        ScenarioSpec {
            n,
            dependence: Dependence::Constant { rho },
            covariates: Vec::new(),
            beta1: Vec::new(),
            beta2: Vec::new(),
            exchange_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::invalid(format!("scenario needs n >= 50, got {}", self.n)));
        }
        let rhos = match &self.dependence {
            Dependence::Constant { rho } => vec![*rho],
            Dependence::ByGroup {
                covariate,
                rho0,
                rho1,
            } => {
                let binary = self.covariates.iter().any(|c| {
                    &c.name == covariate && matches!(c.generator, Generator::Binary { .. })
                });
                if !binary {
                    return Err(Error::invalid(format!(
                        "group covariate \"{covariate}\" must be a declared binary covariate"
                    )));
                }
                vec![*rho0, *rho1]
            }
        };
        if let Some(r) = rhos.iter().find(|r| !(r.abs() < 1.0)) {
            return Err(Error::invalid(format!("correlation must satisfy |rho| < 1, got {r}")));
        }
        let q = self.covariates.len() + 1;
        for (name, beta) in [("beta1", &self.beta1), ("beta2", &self.beta2)] {
            if !beta.is_empty() && beta.len() != q {
                return Err(Error::invalid(format!(
                    "{name} needs {q} coefficients (intercept + covariates), got {}",
                    beta.len()
                )));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        for c in &self.covariates {
            if c.name == RESPONSE_1 || c.name == RESPONSE_2 {
                return Err(Error::invalid(format!("covariate name \"{}\" is reserved", c.name)));
            }
            match c.generator {
                Generator::Uniform { low, high } if !(low < high) => {
                    return Err(Error::invalid(format!(
                        "uniform covariate \"{}\" needs low < high",
                        c.name
                    )))
                }
                Generator::Binary { p, .. } if !(0.0..=1.0).contains(&p) => {
                    return Err(Error::invalid(format!(
                        "binary covariate \"{}\" needs p in [0, 1]",
                        c.name
                    )))
                }
                _ => {}
            }
        }
        if !(0.0..=1.0).contains(&self.exchange_prob) {
            return Err(Error::invalid("exchange_prob must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Distinct correlation groups: `(group label, rho)`.
    pub fn groups(&self) -> Vec<(Option<u8>, f64)> {
        match &self.dependence {
            Dependence::Constant { rho } => vec![(None, *rho)],
            Dependence::ByGroup { rho0, rho1, .. } => vec![(Some(0), *rho0), (Some(1), *rho1)],
        }
    }
}

/// Draws a dataset with columns `y1`, `y2`, then the covariates.
pub fn generate(scenario: &ScenarioSpec) -> Result<Dataset> {
    scenario.validate()?;
    let n = scenario.n;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut covariates: Vec<(String, Vec<f64>)> = Vec::with_capacity(scenario.covariates.len());
    for spec in &scenario.covariates {
        let values = match spec.generator {
            Generator::Uniform { low, high } => {
                (0..n).map(|_| rng.random_range(low..high)).collect()
            }
            Generator::Binary { p, balanced: false } => {
                (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect()
            }
            Generator::Binary { p, balanced: true } => {
                let ones = (n as f64 * p).round() as usize;
                let mut v: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < ones))).collect();
                v.shuffle(&mut rng);
                v
            }
        };
        covariates.push((spec.name.clone(), values));
    }

    let rho_of_row: Box<dyn Fn(usize) -> f64> = match &scenario.dependence {
        Dependence::Constant { rho } => {
            let rho = *rho;
            Box::new(move |_| rho)
        }
        Dependence::ByGroup {
            covariate,
            rho0,
            rho1,
        } => {
            let (rho0, rho1) = (*rho0, *rho1);
            let group = covariates
                .iter()
                .find(|(name, _)| name == covariate)
                .map(|(_, v)| v.clone())
                .expect("validated group covariate");
            Box::new(move |i| if group[i] == 1.0 { rho1 } else { rho0 })
        }
    };

    let linear = |beta: &[f64], i: usize| -> f64 {
        if beta.is_empty() {
            return 0.0;
        }
        beta[0]
            + covariates
                .iter()
                .zip(&beta[1..])
                .map(|((_, col), b)| b * col[i])
                .sum::<f64>()
    };

    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for i in 0..n {
        let rho = rho_of_row(i);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let e1 = z1;
        let e2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
        let mut a = linear(&scenario.beta1, i) + e1;
        let mut b = linear(&scenario.beta2, i) + e2;
        if scenario.exchange_prob > 0.0 && rng.random::<f64>() < scenario.exchange_prob {
            std::mem::swap(&mut a, &mut b);
        }
        y1.push(a);
        y2.push(b);
    }

    let mut columns = vec![(RESPONSE_1.to_string(), y1), (RESPONSE_2.to_string(), y2)];
    columns.extend(covariates);
    Dataset::new(columns)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Lower integration limit standing in for −∞; Phi(−12) < 2e−33.
const LOWER: f64 = -12.0;

/// Standard bivariate normal CDF `P(X <= h, Y <= k)` with correlation `rho`,
/// by nested adaptive quadrature of the joint density.
///
/// With `Y = rho X + sqrt(1 - rho^2) V`, the inner integral runs over `V` up
/// to `(k - rho x) / sqrt(1 - rho^2)` and the outer over `x` up to `h`. The
/// outer range is split where the inner limit crosses zero, which is where
/// the integrand changes fastest as `|rho| -> 1`.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64, tol: f64) -> f64 {
    if rho == 0.0 {
        let inner = |u: f64| quadrature::integrate(std_normal_pdf, LOWER, u.min(-LOWER), tol);
        return inner(h) * inner(k);
    }
    let s = (1.0 - rho * rho).sqrt();
    let inner_tol = tol * 1e-2;
    let inner = |x: f64| {
        let upper = ((k - rho * x) / s).min(-LOWER);
        if upper <= LOWER {
            0.0
        } else {
            quadrature::integrate(std_normal_pdf, LOWER, upper, inner_tol)
        }
    };
    let upper = h.min(-LOWER);
    if upper <= LOWER {
        return 0.0;
    }
    quadrature::integrate_pieces(
        |x| std_normal_pdf(x) * inner(x),
        LOWER,
        upper,
        &[k / rho],
        tol,
    )
}

/// φ between the two residual-sign indicators when the errors are standard
/// bivariate normal with correlation `rho`.
pub fn oracle_phi_gaussian(rho: f64, tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    let z = normal_quantile(tau);
    let joint = bivariate_normal_cdf(z, z, rho, 1e-11);
    Ok((joint - tau * tau) / (tau * (1.0 - tau)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub group: Option<u8>,
    pub rho: f64,
    pub tau: f64,
    pub phi: f64,
}

/// Oracle φ for every correlation group of the scenario and every `tau`.
pub fn oracle_table(scenario: &ScenarioSpec, taus: &[f64]) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    for (group, rho) in scenario.groups() {
        for &tau in taus {
            rows.push(OracleRow {
                group,
                rho,
                tau,
                phi: oracle_phi_gaussian(rho, tau)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn independent_errors() {
        let d = generate(&ScenarioSpec::gaussian(2000, 0.0, 1)).unwrap();
        let r = correlation(d.column("y1").unwrap(), d.column("y2").unwrap());
        assert!(r.abs() <= 3.0 / (2000f64).sqrt(), "{r}");
    }

    #[test]
    fn strong_correlation_recovered() {
        let n = 10_000;
        let d = generate(&ScenarioSpec::gaussian(n, 0.9, 2)).unwrap();
        let r = correlation(d.column("y1").unwrap(), d.column("y2").unwrap());
        assert!((r - 0.9).abs() <= 0.02, "{r}");
    }

    #[test]
    fn generation_is_deterministic() {
        let s = ScenarioSpec::gaussian(100, 0.3, 99);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = ScenarioSpec { seed: 100, ..s.clone() };
        assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn coefficients_shift_responses() {
        let base = ScenarioSpec {
            covariates: vec![CovariateSpec {
                name: "x".into(),
                generator: Generator::Uniform { low: 0.0, high: 1.0 },
            }],
            ..ScenarioSpec::gaussian(60, 0.5, 5)
        };
        let shifted = ScenarioSpec {
            beta1: vec![1.0, 2.0],
            beta2: vec![-1.0, 0.5],
            ..base.clone()
        };
        let d0 = generate(&base).unwrap();
        let d1 = generate(&shifted).unwrap();
        let x = d0.column("x").unwrap();
        for i in 0..60 {
            let e1 = d0.column("y1").unwrap()[i];
            assert!((d1.column("y1").unwrap()[i] - (1.0 + 2.0 * x[i] + e1)).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_binary_has_exact_count() {
        let s = ScenarioSpec {
            covariates: vec![CovariateSpec {
                name: "g".into(),
                generator: Generator::Binary { p: 0.5, balanced: true },
            }],
            dependence: Dependence::ByGroup {
                covariate: "g".into(),
                rho0: 0.2,
                rho1: 0.8,
            },
            ..ScenarioSpec::gaussian(200, 0.0, 3)
        };
        let d = generate(&s).unwrap();
        assert_eq!(d.column("g").unwrap().iter().sum::<f64>(), 100.0);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(generate(&ScenarioSpec::gaussian(10, 0.0, 1)).is_err());
        assert!(generate(&ScenarioSpec::gaussian(100, 1.0, 1)).is_err());
        let s = ScenarioSpec {
            dependence: Dependence::ByGroup {
                covariate: "g".into(),
                rho0: 0.0,
                rho1: 0.5,
            },
            ..ScenarioSpec::gaussian(100, 0.0, 1)
        };
        assert!(s.validate().is_err());
        let s = ScenarioSpec {
            beta1: vec![1.0, 2.0],
            ..ScenarioSpec::gaussian(100, 0.0, 1)
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn oracle_closed_forms() {
        for tau in [0.1, 0.5, 0.9] {
            assert!(oracle_phi_gaussian(0.0, tau).unwrap().abs() < 1e-9);
            assert!((oracle_phi_gaussian(0.999_999, tau).unwrap() - 1.0).abs() < 1e-2);
        }
        // 2 asin(0.5) / pi
        assert!((oracle_phi_gaussian(0.5, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        assert!(oracle_phi_gaussian(1.0, 0.5).is_err());
        assert!(oracle_phi_gaussian(0.5, 1.0).is_err());
    }

    #[test]
    fn bivariate_cdf_matches_arcsine_at_origin() {
        for rho in [-0.9, -0.3, 0.2, 0.7, 0.95] {
            let exact = 0.25 + f64::asin(rho) / (2.0 * std::f64::consts::PI);
            assert!((bivariate_normal_cdf(0.0, 0.0, rho, 1e-11) - exact).abs() < 1e-9);
        }
    }
}
