use nalgebra::{DMatrix, DVector};

/// Relative threshold under which a Gram-Schmidt residual counts as zero.
const RANK_TOL: f64 = 1e-9;

/// Solves a symmetric positive (semi)definite system, falling back to LU when
/// the Cholesky factorization fails.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    a.lu().solve(b)
}

/// Indices of columns that are (numerically) linear combinations of the
/// preceding columns, found by modified Gram-Schmidt.
pub(crate) fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= RANK_TOL * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Greedily picks `q` linearly independent rows, visiting candidates in the
/// given order.
pub(crate) fn independent_rows(x: &DMatrix<f64>, order: &[usize]) -> Option<Vec<usize>> {
    let q = x.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(q);
    let mut picked = Vec::with_capacity(q);
    for &i in order {
        let row = x.row(i).transpose();
        let norm0 = row.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row;
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        let norm = v.norm();
        if norm > RANK_TOL * norm0 {
            basis.push(v / norm);
            picked.push(i);
            if picked.len() == q {
                return Some(picked);
            }
        }
    }
    None
}
