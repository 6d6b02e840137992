//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a column counts as linearly dependent.
const PIVOT_TOLERANCE: f64 = 1e-10;

/// Indices of columns of the symmetric PSD matrix `a` that are (numerically)
/// linear combinations of earlier columns.
///
/// Runs a Cholesky sweep in column order and drops any column whose pivot
/// falls below `PIVOT_TOLERANCE` times its diagonal entry.
pub fn collinear_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut kept: Vec<usize> = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for j in 0..n {
        let diag = a[(j, j)];
        let mut pivot = diag;
        for &k in &kept {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || pivot <= PIVOT_TOLERANCE * diag {
            dropped.push(j);
            continue;
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for &k in &kept {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
        kept.push(j);
    }
    dropped
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub fn spd_inverse_logdet(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = a.clone().cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some((chol.inverse(), logdet))
}

/// Solve `a x = b` for symmetric positive definite `a`, returning the
/// solution and `a⁻¹`. Rank problems are reported against `labels`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, labels: &[String]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dropped = collinear_columns(a);
    if !dropped.is_empty() {
        return Err(rank_error(&dropped, labels));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal matrix is not positive definite".into()))?;
    Ok((chol.solve(b), chol.inverse()))
}

pub(crate) fn rank_error(dropped: &[usize], labels: &[String]) -> Error {
    Error::RankDeficient {
        columns: dropped
            .iter()
            .map(|&j| labels.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
            .collect(),
    }
}
