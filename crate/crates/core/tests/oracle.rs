use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use qsign::concordance::phi_bounds;
use qsign::synthetic::{normal_quantile, oracle_phi_gaussian};

/// (rho, tau, phi) computed independently by one-dimensional adaptive
/// quadrature of the bivariate normal CDF in scipy.
const FROZEN: [(f64, f64, f64); 18] = [
    (0.0, 0.1, 0.0),
    (0.0, 0.5, 0.0),
    (0.0, 0.9, 0.0),
    (0.2, 0.1, 0.07995838911787564),
    (0.2, 0.5, 0.12818843369794974),
    (0.2, 0.9, 0.07995838911787347),
    (0.5, 0.1, 0.24890581353715016),
    (0.5, 0.5, 0.3333333333333335),
    (0.5, 0.9, 0.24890581353715177),
    (0.8, 0.1, 0.5138081860525319),
    (0.8, 0.5, 0.5903344706017335),
    (0.8, 0.9, 0.5138081860525323),
    (0.9, 0.1, 0.6540548930190617),
    (0.9, 0.5, 0.7128674137425874),
    (0.9, 0.9, 0.6540548930190603),
    (-0.5, 0.1, -0.10290442899539196),
    (-0.5, 0.5, -0.33333333333333326),
    (-0.5, 0.9, -0.10290442899539227),
];

#[test]
fn matches_frozen_reference_values() {
    for (rho, tau, want) in FROZEN {
        let got = oracle_phi_gaussian(rho, tau).unwrap();
        assert!((got - want).abs() < 1e-9, "rho={rho} tau={tau}: {got} vs {want}");
    }
}

#[test]
fn arcsine_closed_form_at_the_median() {
    for rho in [-0.9, -0.3, 0.0, 0.25, 0.5, 0.75, 0.99] {
        let want = 2.0 / std::f64::consts::PI * f64::asin(rho);
        assert!((oracle_phi_gaussian(rho, 0.5).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn monte_carlo_cross_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000_000;
    for (rho, tau) in [(0.5, 0.1), (0.8, 0.5), (-0.4, 0.7)] {
        let h = normal_quantile(tau);
        let s = (1.0f64 - rho * rho).sqrt();
        let mut hits = 0u64;
        for _ in 0..draws {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            if a <= h && rho * a + s * b <= h {
                hits += 1;
            }
        }
        let p = hits as f64 / draws as f64;
        let mc = (p - tau * tau) / (tau * (1.0 - tau));
        let se = (p * (1.0 - p) / draws as f64).sqrt() / (tau * (1.0 - tau));
        let oracle = oracle_phi_gaussian(rho, tau).unwrap();
        assert!((mc - oracle).abs() < 4.0 * se, "rho={rho} tau={tau}: mc {mc} oracle {oracle} se {se}");
    }
}

#[test]
fn increasing_in_rho_and_symmetric_in_tau() {
    for tau in [0.05, 0.2, 0.35, 0.5] {
        let mut last = f64::NEG_INFINITY;
        for k in -19..=19 {
            let rho = k as f64 / 20.0;
            let v = oracle_phi_gaussian(rho, tau).unwrap();
            assert!(v > last);
            last = v;
            let mirror = oracle_phi_gaussian(rho, 1.0 - tau).unwrap();
            assert!((v - mirror).abs() < 1e-6);
        }
    }
}

#[test]
fn stays_within_bounds_and_approaches_them() {
    for tau in [0.1, 0.3, 0.5, 0.8] {
        let b = phi_bounds(tau).unwrap();
        for k in -99..=99 {
            let v = oracle_phi_gaussian(k as f64 / 100.0, tau).unwrap();
            assert!(v >= b.phi_min - 1e-12 && v <= b.phi_max + 1e-12);
        }
        assert!(oracle_phi_gaussian(1.0, tau).is_err());
        assert!(oracle_phi_gaussian(0.99999, tau).unwrap() > 0.98);
        assert!((oracle_phi_gaussian(-0.99999, tau).unwrap() - b.phi_min).abs() < 0.02);
    }
}
