//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this magnitude are treated as zero before rooting.
pub const EIGEN_CLAMP: f64 = 1e-12;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Operator (spectral) norm of `m` by power iteration on the Gram matrix `mᵀm`.
///
/// The start vector is the normalized all-ones vector, so the result is
/// deterministic. Iteration stops once the Rayleigh quotient changes by less
/// than `1e-10` relative, or after 10 000 iterations.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = v.dot(&(&gram * &v));
    for _ in 0..POWER_MAX_ITERS {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            // all-ones start vector lies in the null space of the Gram matrix;
            // fall back to the exact symmetric eigen-decomposition
            return gram
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(0.0, f64::max)
                .sqrt();
        }
        v = w / norm;
        let next = v.dot(&(&gram * &v));
        let done = (next - lambda).abs() <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// True when `m` is square and symmetric up to a relative tolerance.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Principal square root of a symmetric positive-semidefinite matrix.
///
/// Eigenvalues within [`EIGEN_CLAMP`] of zero (or slightly negative from
/// rounding) are clamped to 0 before taking the root.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| if l < EIGEN_CLAMP { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Inverse and log-determinant of a symmetric positive-definite matrix.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.inverse(), logdet))
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Symmetrize in place: `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
