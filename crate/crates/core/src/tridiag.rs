//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` in place.
///
/// `lower[0]` and `upper[n-1]` are ignored. No pivoting; intended for the
/// diagonally dominant matrices of implicit diffusion.
pub fn solve_in_place(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: rhs.len().min(lower.len()).min(upper.len()),
        });
    }
    if n == 0 {
        return Ok(());
    }
    let mut c_prime = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::LinearSolveFailure { row: 0 });
    }
    c_prime[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c_prime[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolveFailure { row: i });
        }
        c_prime[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
    Ok(())
}

/// Constant-coefficient Neumann diffusion matrix `I - θ α Δ_h h²` applied by
/// [`solve_in_place`]. `alpha = dt d / h²` already scaled by `θ`.
pub fn solve_neumann_implicit(alpha: f64, rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    let lower = vec![-alpha; n];
    let upper = vec![-alpha; n];
    let mut diag = vec![1.0 + 2.0 * alpha; n];
    if n > 0 {
        diag[0] = 1.0 + alpha;
        diag[n - 1] = 1.0 + alpha;
    }
    solve_in_place(&lower, &diag, &upper, rhs)
}
