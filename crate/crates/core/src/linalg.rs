//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

/// Largest absolute entry, `‖A‖_max`.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn vec_max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

/// Eigenvalues of a general real matrix through the real Schur form.
///
/// Returns `None` when the QR iteration fails to converge.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a symmetric matrix, ascending, with matching eigenvector columns.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    Some((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Flip the sign of `v` so that its first entry of "significant" size is positive.
///
/// Significant means at least half of the largest magnitude, which keeps the
/// choice stable under rounding when two entries tie in magnitude.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let big = vec_max_norm(v);
    if big == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() >= 0.5 * big) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}
