//! Symmetric matrix functions via eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor applied before inverting or taking inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies `f` to the eigenvalues of the symmetric part of `m`.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(f);
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&out)
}

/// Principal square root of a PSD matrix; negative round-off eigenvalues are
/// clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| v.max(0.0).sqrt())
}

/// `m^{-1/2}` with eigenvalues floored at [`EIGEN_FLOOR`].
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| 1.0 / v.max(EIGEN_FLOOR).sqrt())
}

/// Inverse with eigenvalues floored at [`EIGEN_FLOOR`].
pub fn sym_inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| 1.0 / v.max(EIGEN_FLOOR))
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *eigenvalues(m).last().unwrap()
}

/// Spectral condition number of a symmetric matrix (`inf` when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues(m);
    let hi = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Operator (spectral) norm of a general matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Rejects matrices that are not symmetric PSD up to `tol` (relative).
pub fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotPositiveDefinite(format!("{what} is not square")));
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let lo = min_eigenvalue(m);
    if lo < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has eigenvalue {lo:.3e}"
        )));
    }
    Ok(())
}

/// Matrix geometric mean `A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}`.
pub fn geometric_mean(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::InvalidParameter("geometric mean needs square matrices of equal size".into()));
    }
    let lo = min_eigenvalue(a);
    if lo <= EIGEN_FLOOR * a.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "left operand of the geometric mean is singular (min eigenvalue {lo:.3e})"
        )));
    }
    let ra = sym_sqrt(a);
    let ra_inv = sym_inv_sqrt(a);
    let inner = sym_sqrt(&symmetrize(&(&ra_inv * b * &ra_inv)));
    Ok(symmetrize(&(&ra * inner * &ra)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = sym_sqrt(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
        let ri = sym_inv_sqrt(&m);
        assert!((&ri * &m * &ri - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_psd(&m, "m").is_err());
        assert!(check_psd(&DMatrix::identity(2, 2), "i").is_ok());
    }

    #[test]
    fn singular_left_operand_is_rejected() {
        let a = DMatrix::from_diagonal_element(2, 2, 0.0);
        assert!(geometric_mean(&a, &DMatrix::identity(2, 2)).is_err());
    }
}
