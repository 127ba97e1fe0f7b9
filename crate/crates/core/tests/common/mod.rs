//! Helpers shared by the integration test targets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qsign::qr::{pinball_objective, DesignMatrix};

/// Intercept plus `q - 1` uniform covariates on `[-2, 2)`.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, q: usize) -> DesignMatrix {
    let mut names = vec!["(Intercept)".to_string()];
    names.extend((1..q).map(|j| format!("x{j}")));
    let values = DMatrix::from_fn(n, q, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
    DesignMatrix::new(values, names, true).unwrap()
}

/// Skewed, heavy-ish noise.
pub fn heavy_noise(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(-1.0..1.0);
    u * u * u * 3.0 + rng.random_range(-0.5..0.5)
}

/// Minimum pinball objective over every fit that interpolates `q` observations.
/// Some optimum of a linear quantile regression is always of this form.
pub fn basic_solution_minimum(x: &DesignMatrix, y: &[f64], tau: f64) -> f64 {
    let (n, q) = (x.n_rows(), x.n_cols());
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..q).collect();
    loop {
        let a = DMatrix::from_fn(q, q, |i, j| x.values()[(subset[i], j)]);
        let b = DVector::from_iterator(q, subset.iter().map(|&i| y[i]));
        if a.determinant().abs() > 1e-10 {
            if let Some(beta) = a.lu().solve(&b) {
                let fitted = x.predict(beta.as_slice());
                let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
                best = best.min(pinball_objective(&r, tau));
            }
        }
        let mut k = q;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if subset[k] < n - q + k {
                subset[k] += 1;
                for m in k + 1..q {
                    subset[m] = subset[m - 1] + 1;
                }
                break;
            }
        }
    }
}
