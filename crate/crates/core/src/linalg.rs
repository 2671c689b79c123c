//! Thin dense linear-algebra layer over `faer`.
//!
//! Everything here is sequential: `faer` is built without its rayon feature so
//! factorizations are bit-reproducible run to run.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = Mat<f64>;

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    /// Factors `m`. On failure the error carries the extreme eigenvalues of
    /// `m` so the caller can see how badly conditioned the system was.
    pub fn factor(m: &Matrix) -> Result<Self> {
        match m.llt(Side::Lower) {
            Ok(llt) => Ok(Self { llt }),
            Err(_) => Err(Error::numerical(format!(
                "Cholesky factorization failed for {n}x{n} system ({})",
                condition_report(m),
                n = m.nrows()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut col = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(col.as_mut());
        (0..rhs.len()).map(|i| col[(i, 0)]).collect()
    }

    /// Applies `L^{-1}` to every column of `rhs` in place.
    pub fn forward_in_place(&self, rhs: &mut Matrix) {
        self.llt.L().solve_lower_triangular_in_place(rhs.as_mut());
    }
}

/// Summary of the spectrum used in numerical error messages.
pub fn condition_report(m: &Matrix) -> String {
    match symmetric_eigenvalues(m) {
        Ok(eigs) if !eigs.is_empty() => {
            let max = eigs[0];
            let min = eigs[eigs.len() - 1];
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            format!("lambda_max={max:e}, lambda_min={min:e}, condition={cond:e}")
        }
        Ok(_) => "empty matrix".to_string(),
        Err(_) => "eigendecomposition also failed".to_string(),
    }
}

/// Eigenvalues of a symmetric matrix, sorted in descending order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    check_finite(m)?;
    let mut eigs = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    eigs.reverse();
    Ok(eigs)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending; column `j` of the
/// returned matrix is the eigenvector of the `j`-th value.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_finite(m)?;
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let n = m.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

fn check_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// `true` when the smallest eigenvalue is at least `-rel_tol * largest`.
pub fn is_psd(eigs_desc: &[f64], rel_tol: f64) -> bool {
    match (eigs_desc.first(), eigs_desc.last()) {
        (Some(&max), Some(&min)) => min >= -rel_tol * max.abs().max(f64::MIN_POSITIVE),
        _ => true,
    }
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues, then re-symmetrizes.
pub fn project_psd(m: &Matrix) -> Result<Matrix> {
    let (values, vectors) = symmetric_eigen(m)?;
    let n = m.nrows();
    let mut out: Matrix = Mat::zeros(n, n);
    for (k, &v) in values.iter().enumerate() {
        let v = v.max(0.0);
        if v == 0.0 {
            continue;
        }
        for j in 0..n {
            let vj = vectors[(j, k)] * v;
            for i in 0..n {
                out[(i, j)] += vectors[(i, k)] * vj;
            }
        }
    }
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (out[(i, j)] + out[(j, i)])))
}

/// Builds a matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_descending() {
        let m = from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigenvalues(&m).unwrap();
        assert!((e[0] - 3.0).abs() < 1e-12);
        assert!((e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let m = from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let c = Cholesky::factor(&m).unwrap();
        let x = c.solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_failure_reports_spectrum() {
        let m = from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let err = Cholesky::factor(&m).err().unwrap().to_string();
        assert!(err.contains("lambda_min"), "{err}");
    }

    #[test]
    fn projection_clips_negative_part() {
        let m = from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let p = project_psd(&m).unwrap();
        let e = symmetric_eigenvalues(&p).unwrap();
        assert!((e[0] - 3.0).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
    }
}
