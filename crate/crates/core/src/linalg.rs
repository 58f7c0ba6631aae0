//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance for symmetry and skew-symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-10;
/// Largest accepted condition number for matrices that get inverted.
pub const MAX_CONDITION: f64 = 1e12;

pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn is_skew(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m + m.transpose()).amax() <= tol
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn is_psd(m: &Mat) -> bool {
    min_eigenvalue(m) >= PSD_FLOOR
}

/// 2-norm condition number; infinite for singular matrices.
pub fn condition_number(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse after a condition-number check.
pub fn checked_inverse(m: &Mat, what: &str) -> Result<Mat> {
    let cond = condition_number(m);
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularMatrix(format!(
            "{what} has condition number {cond:.3e}"
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix(what.to_string()))
}

pub fn solve(m: &Mat, rhs: &Vector) -> Option<Vector> {
    m.clone().lu().solve(rhs)
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.amax()
}

/// Eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &Mat) -> Result<Vec<(f64, f64)>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::SingularMatrix("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

/// Orthonormal basis of the column space of `m`, dropping singular values
/// below `rel_tol · max(σ_max, scale)`.
pub fn range_basis(m: &Mat, rel_tol: f64, scale: f64) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let cut = rel_tol * svd.singular_values.max().max(scale);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut && svd.singular_values[i] > 0.0)
        .collect();
    Mat::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_eigenvalues() {
        let m = Mat::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert!(ev[0].0.abs() < 1e-14 && (ev[0].1 + 2.0).abs() < 1e-14);
        assert!((ev[1].1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn range_of_rank_one() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]);
        let b = range_basis(&m, 1e-10, 0.0);
        assert_eq!(b.ncols(), 1);
        assert!((b[(0, 0)].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(condition_number(&Mat::zeros(2, 2)), f64::INFINITY);
    }
}
