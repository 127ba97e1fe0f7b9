//! Sign concordance of two residual vectors and the φ coefficient.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::validate_tau;

/// Joint sign of the two residuals. The first digit is ω⁽¹⁾, the second ω⁽²⁾,
/// with 1 meaning the observation lies at or below its fitted quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConcordanceLabel {
    #[serde(rename = "00")]
    Above,
    #[serde(rename = "11")]
    Below,
    #[serde(rename = "01")]
    AboveBelow,
    #[serde(rename = "10")]
    BelowAbove,
}

impl ConcordanceLabel {
    /// Report order: "00", "11", "01", "10".
    pub const ALL: [ConcordanceLabel; 4] = [
        ConcordanceLabel::Above,
        ConcordanceLabel::Below,
        ConcordanceLabel::AboveBelow,
        ConcordanceLabel::BelowAbove,
    ];

    pub fn from_signs(omega1: u8, omega2: u8) -> Result<Self> {
        match (omega1, omega2) {
            (0, 0) => Ok(ConcordanceLabel::Above),
            (1, 1) => Ok(ConcordanceLabel::Below),
            (0, 1) => Ok(ConcordanceLabel::AboveBelow),
            (1, 0) => Ok(ConcordanceLabel::BelowAbove),
            _ => Err(Error::invalid(format!(
                "sign indicators must be 0 or 1, got ({omega1}, {omega2})"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConcordanceLabel::Above => "00",
            ConcordanceLabel::Below => "11",
            ConcordanceLabel::AboveBelow => "01",
            ConcordanceLabel::BelowAbove => "10",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_discordant(self) -> bool {
        matches!(
            self,
            ConcordanceLabel::AboveBelow | ConcordanceLabel::BelowAbove
        )
    }

    /// Label obtained when the two responses trade places.
    pub fn swapped(self) -> Self {
        match self {
            ConcordanceLabel::AboveBelow => ConcordanceLabel::BelowAbove,
            ConcordanceLabel::BelowAbove => ConcordanceLabel::AboveBelow,
            other => other,
        }
    }
}

impl fmt::Display for ConcordanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Joint distribution of the two sign indicators. Margins are fixed at
/// `1 - tau` (positive residual) and `tau` (non-positive residual).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbabilities {
    pub p00: f64,
    pub p11: f64,
    pub p01: f64,
    pub p10: f64,
    pub tau: f64,
}

impl CellProbabilities {
    pub fn new(p00: f64, p11: f64, p01: f64, p10: f64, tau: f64) -> Result<Self> {
        validate_tau(tau)?;
        let cells = [p00, p11, p01, p10];
        if cells.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!(
                "cell probabilities must lie in [0, 1], got {cells:?}"
            )));
        }
        let total: f64 = cells.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "cell probabilities sum to {total}, expected 1"
            )));
        }
        Ok(CellProbabilities {
            p00,
            p11,
            p01,
            p10,
            tau,
        })
    }

    pub fn get(&self, label: ConcordanceLabel) -> f64 {
        match label {
            ConcordanceLabel::Above => self.p00,
            ConcordanceLabel::Below => self.p11,
            ConcordanceLabel::AboveBelow => self.p01,
            ConcordanceLabel::BelowAbove => self.p10,
        }
    }

    /// Cells under independence of the two indicators.
    pub fn independence(tau: f64) -> Result<Self> {
        Self::new(
            (1.0 - tau) * (1.0 - tau),
            tau * tau,
            tau - tau * tau,
            tau - tau * tau,
            tau,
        )
    }

    /// Cells under perfect positive dependence.
    pub fn comonotone(tau: f64) -> Result<Self> {
        Self::new(1.0 - tau, tau, 0.0, 0.0, tau)
    }

    /// Cells under the strongest negative dependence the margins allow.
    pub fn countermonotone(tau: f64) -> Result<Self> {
        if tau <= 0.5 {
            Self::new(1.0 - 2.0 * tau, 0.0, tau, tau, tau)
        } else {
            Self::new(0.0, 2.0 * tau - 1.0, 1.0 - tau, 1.0 - tau, tau)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiBounds {
    pub phi_min: f64,
    pub phi_indep: f64,
    pub phi_max: f64,
}

pub fn classify(omega1: &[u8], omega2: &[u8]) -> Result<Vec<ConcordanceLabel>> {
    if omega1.len() != omega2.len() {
        return Err(Error::invalid(format!(
            "sign vectors differ in length: {} vs {}",
            omega1.len(),
            omega2.len()
        )));
    }
    omega1
        .iter()
        .zip(omega2)
        .map(|(&a, &b)| ConcordanceLabel::from_signs(a, b))
        .collect()
}

pub fn label_counts(z: &[ConcordanceLabel]) -> [usize; 4] {
    let mut counts = [0; 4];
    for label in z {
        counts[label.index()] += 1;
    }
    counts
}

/// Relative frequencies of the four labels.
pub fn empirical_cells(z: &[ConcordanceLabel], tau: f64) -> Result<CellProbabilities> {
    if z.is_empty() {
        return Err(Error::invalid("no concordance labels"));
    }
    let n = z.len() as f64;
    let c = label_counts(z);
    CellProbabilities::new(
        c[0] as f64 / n,
        c[1] as f64 / n,
        c[2] as f64 / n,
        c[3] as f64 / n,
        tau,
    )
}

/// φ with margins fixed at `tau` / `1 - tau`:
/// `(p11 p00 - p01 p10) / (tau (1 - tau))`.
pub fn phi(cells: &CellProbabilities) -> f64 {
    let tau = cells.tau;
    (cells.p11 * cells.p00 - cells.p01 * cells.p10) / (tau * (1.0 - tau))
}

pub fn phi_bounds(tau: f64) -> Result<PhiBounds> {
    validate_tau(tau)?;
    Ok(PhiBounds {
        phi_min: phi_min(tau),
        phi_indep: 0.0,
        phi_max: 1.0,
    })
}

pub(crate) fn phi_min(tau: f64) -> f64 {
    if tau <= 0.5 {
        -tau / (1.0 - tau)
    } else {
        -(1.0 - tau) / tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use ConcordanceLabel::*;

    #[test]
    fn classify_cases() {
        let z = classify(&[0, 1, 0, 1], &[0, 1, 1, 0]).unwrap();
        assert_eq!(z, vec![Above, Below, AboveBelow, BelowAbove]);
        assert_eq!(
            z.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
            ["00", "11", "01", "10"]
        );
        assert!(classify(&[0, 1], &[0]).is_err());
        assert!(classify(&[2], &[0]).is_err());
    }

    #[test]
    fn identical_signs_are_never_discordant() {
        let w = [0, 1, 1, 0, 0, 1, 0];
        assert!(classify(&w, &w).unwrap().iter().all(|l| !l.is_discordant()));
    }

    #[test]
    fn empirical_cell_counts() {
        let c = empirical_cells(&[Above, Below, AboveBelow, BelowAbove], 0.5).unwrap();
        assert_eq!((c.p00, c.p11, c.p01, c.p10), (0.25, 0.25, 0.25, 0.25));

        let mut z = vec![Above; 80];
        z.extend(vec![Below; 20]);
        let c = empirical_cells(&z, 0.2).unwrap();
        assert!((c.p00 - 0.8).abs() < 1e-15);
        assert_eq!((c.p11, c.p01, c.p10), (0.2, 0.0, 0.0));

        assert!(empirical_cells(&[], 0.5).is_err());
    }

    #[test]
    fn independent_signs_match_independence_row() {
        let n = 10_000;
        let tau = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
        let w1: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < tau)).collect();
        let w2: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < tau)).collect();
        let cells = empirical_cells(&classify(&w1, &w2).unwrap(), tau).unwrap();
        let expected = CellProbabilities::independence(tau).unwrap();
        for label in ConcordanceLabel::ALL {
            let p = expected.get(label);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (cells.get(label) - p).abs() <= 3.0 * se,
                "{label}: {} vs {p}",
                cells.get(label)
            );
        }
    }

    #[test]
    fn phi_limit_rows() {
        for tau in [0.1, 0.3, 0.5, 0.77] {
            assert!(phi(&CellProbabilities::independence(tau).unwrap()).abs() < 1e-12);
            assert!((phi(&CellProbabilities::comonotone(tau).unwrap()) - 1.0).abs() < 1e-12);
        }
        let c = CellProbabilities::new(0.5, 0.0, 0.25, 0.25, 0.25).unwrap();
        assert!((phi(&c) + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_values() {
        let b = phi_bounds(0.5).unwrap();
        assert_eq!((b.phi_min, b.phi_indep, b.phi_max), (-1.0, 0.0, 1.0));
        assert!((phi_bounds(0.1).unwrap().phi_min + 1.0 / 9.0).abs() < 1e-15);
        assert!((phi_bounds(0.9).unwrap().phi_min + 1.0 / 9.0).abs() < 1e-15);
        assert!(phi_bounds(0.0).is_err());
        assert!(phi_bounds(1.5).is_err());
    }

    #[test]
    fn cells_validation() {
        assert!(CellProbabilities::new(0.5, 0.5, 0.1, 0.0, 0.5).is_err());
        assert!(CellProbabilities::new(1.1, -0.1, 0.0, 0.0, 0.5).is_err());
        assert!(CellProbabilities::new(0.25, 0.25, 0.25, 0.25, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn phi_symmetric_in_discordant_cells(
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0,
            tau in 0.01f64..0.99,
        ) {
            let s = a + b + c + d + 1e-9;
            let (p00, p11, p01) = (a / s, b / s, c / s);
            let p10 = 1.0 - p00 - p11 - p01;
            prop_assume!(p10 >= 0.0);
            let x = CellProbabilities::new(p00, p11, p01, p10, tau).unwrap();
            let y = CellProbabilities::new(p00, p11, p10, p01, tau).unwrap();
            prop_assert!((phi(&x) - phi(&y)).abs() < 1e-12);
        }

        #[test]
        fn swapping_responses_swaps_discordant_labels(
            w in proptest::collection::vec((0u8..2, 0u8..2), 1..50)
        ) {
            let (w1, w2): (Vec<u8>, Vec<u8>) = w.into_iter().unzip();
            let forward = classify(&w1, &w2).unwrap();
            let backward = classify(&w2, &w1).unwrap();
            for (f, b) in forward.iter().zip(&backward) {
                prop_assert_eq!(f.swapped(), *b);
            }
        }

        #[test]
        fn limit_rows_stay_within_bounds(k in 1usize..20) {
            let tau = k as f64 * 0.05;
            let b = phi_bounds(tau).unwrap();
            for cells in [
                CellProbabilities::independence(tau).unwrap(),
                CellProbabilities::comonotone(tau).unwrap(),
                CellProbabilities::countermonotone(tau).unwrap(),
            ] {
                let v = phi(&cells);
                prop_assert!(v >= b.phi_min - 1e-12 && v <= b.phi_max + 1e-12);
            }
        }
    }
}
