//! Small dense complex linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::autodiff::CMat;

pub type CVec = DVector<Complex64>;

/// Ratio of extreme eigenvalues of a Hermitian positive semidefinite matrix.
pub fn hermitian_condition(g: &CMat) -> f64 {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares solution of `a x = y` through a thin QR factorization.
///
/// Returns `None` when `a` is numerically rank deficient.
pub fn least_squares_qr(a: &CMat, y: &CVec) -> Option<CVec> {
    let n = a.ncols();
    if n == 0 || a.nrows() < n {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..n).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    let tol = max_diag * 1e-10 * a.nrows().max(n) as f64;
    if (0..n).any(|i| r[(i, i)].norm() <= tol) {
        return None;
    }
    let rhs = qr.q().adjoint() * y;
    r.solve_upper_triangular(&rhs)
}

/// Column vector from a matrix column.
pub fn column(m: &CMat, j: usize) -> CVec {
    m.column(j).into_owned()
}

pub fn real_matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    DMatrix::from_fn(rows, cols, |r, c| Complex64::new(f(r, c), 0.0))
}
