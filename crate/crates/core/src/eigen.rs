//! Dense symmetric eigendecomposition by the cyclic Jacobi method.
//!
//! The sweep order is fixed (row-major over the strict upper triangle), so
//! identical inputs always produce bit-identical eigenpairs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sweeps stop once the off-diagonal Frobenius norm drops below this value
/// times `max(1, ||A||_F)`.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;
/// Entries with magnitude at or below this are skipped by the sign convention.
pub const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted ascending (stable on ties, so the solver's
/// order within a degenerate eigenspace is kept) and every eigenvector is
/// flipped so that its first entry with `|x| > 1e-12` is positive.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (matrix[(i, j)], matrix[(j, i)]);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = OFF_DIAGONAL_TOLERANCE * matrix.norm().max(1.0);
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) > threshold {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    if off_diagonal_norm(&a) > threshold {
        return Err(Error::FitFailure(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut column = v.column(src).into_owned();
        if let Some(first) = column.iter().find(|x| x.abs() > SIGN_TOLERANCE) {
            if *first < 0.0 {
                column.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &column);
    }

    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}
