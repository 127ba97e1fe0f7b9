mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{basic_solution_minimum, heavy_noise, random_design};
use qsign::qr::{fit_quantile_regression, pinball_objective};

#[test]
fn objective_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(3..=12);
        let q = rng.random_range(1..=2);
        let tau = rng.random_range(1..=19) as f64 / 20.0;
        let x = random_design(&mut rng, n, q);
        let y: Vec<f64> = (0..n).map(|_| heavy_noise(&mut rng)).collect();
        let fit = fit_quantile_regression(&x, &y, tau).unwrap();
        let oracle = basic_solution_minimum(&x, &y, tau);
        assert!((fit.objective - oracle).abs() <= 1e-8, "n={n} q={q} tau={tau}: {} vs {oracle}", fit.objective);
    }
}

#[test]
fn ties_in_the_response_are_handled() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(5..=12);
        let x = random_design(&mut rng, n, 2);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        let fit = fit_quantile_regression(&x, &y, 0.5).unwrap();
        let oracle = basic_solution_minimum(&x, &y, 0.5);
        assert!((fit.objective - oracle).abs() <= 1e-8);
    }
}

fn case_strategy() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (any::<u64>(), 30usize..200, 1usize..5, 1usize..10).prop_map(|(s, n, q, t)| (s, n, q, t as f64 / 10.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn quantile_property((seed, n, q, tau) in case_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_design(&mut rng, n, q);
        let y: Vec<f64> = (0..n).map(|_| heavy_noise(&mut rng)).collect();
        let fit = fit_quantile_regression(&x, &y, tau).unwrap();
        let below = fit.residuals.iter().filter(|&&r| r < 0.0).count() as f64 / n as f64;
        let at_or_below = fit.residuals.iter().filter(|&&r| r <= 0.0).count() as f64 / n as f64;
        let slack = (q + 1) as f64 / n as f64;
        prop_assert!((below - tau).abs() <= slack);
        prop_assert!(below <= tau + 1e-12 && at_or_below >= tau - 1e-12);
    }

    #[test]
    fn subgradient_optimality((seed, n, q, tau) in case_strategy()) {
        // At a vertex, sum over non-interpolated rows of psi_tau(r) x_i must be
        // cancelled by some weights in [tau - 1, tau] on the interpolated rows.
        // A cheap necessary check: no coordinate direction decreases the objective.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_design(&mut rng, n, q);
        let y: Vec<f64> = (0..n).map(|_| heavy_noise(&mut rng)).collect();
        let fit = fit_quantile_regression(&x, &y, tau).unwrap();
        for j in 0..q {
            for step in [1e-4, -1e-4] {
                let mut beta = fit.beta.clone();
                beta[j] += step;
                let fitted = x.predict(&beta);
                let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
                prop_assert!(pinball_objective(&r, tau) >= fit.objective - 1e-10);
            }
        }
    }

    #[test]
    fn equivariance((seed, n, q, tau) in case_strategy(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_design(&mut rng, n, q);
        let y: Vec<f64> = (0..n).map(|_| heavy_noise(&mut rng)).collect();
        let base = fit_quantile_regression(&x, &y, tau).unwrap();

        // y -> a y + b shifts the intercept and scales every coefficient.
        let y2: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
        let moved = fit_quantile_regression(&x, &y2, tau).unwrap();
        prop_assert!((moved.objective - scale * base.objective).abs() <= 1e-7 * (1.0 + moved.objective));

        // -y at 1 - tau mirrors the fit.
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let mirrored = fit_quantile_regression(&x, &neg, 1.0 - tau).unwrap();
        prop_assert!((mirrored.objective - base.objective).abs() <= 1e-8 * (1.0 + base.objective));
    }
}
