//! Dense linear-algebra and special-function kernels every other module
//! builds on: symmetric eigendecomposition, matrix exponential and rotation
//! logarithm, chi-square distribution functions and Haar sampling.
//!
//! All operations are pure functions of their inputs; random streams are
//! explicit parameters and never shared between concurrent callers.

pub mod eig;
pub mod expm;
pub mod haar;
pub mod mat;
pub mod rng;
pub mod special;

pub use eig::{eigvec_map_psi, sym_eig_desc, sym_eig_psi};
pub use expm::{expm, logm_rotation, polar_orthogonal};
pub use haar::{conditional_haar_orthogonal, haar_orthogonal};
pub use mat::Mat;
pub use rng::RngStream;
pub use special::{chi2_cdf, chi2_pdf, chi2_quantile, chi2_sf};

use crate::error::{Error, Result};

/// Tolerance for the relative asymmetry of a [`SymMatrix`].
pub const SYM_TOL: f64 = 1e-12;
/// Tolerance for the orthogonality defect of an [`OrthoMatrix`].
pub const ORTHO_TOL: f64 = 1e-10;

/// Symmetric matrix; relative asymmetry below [`SYM_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Validates symmetry to within `SYM_TOL` relative Frobenius error.
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::domain("symmetric matrix must be square"));
        }
        let asym = m.skew_part().norm_fro();
        let scale = m.norm_fro().max(1.0);
        if asym > SYM_TOL * scale {
            return Err(Error::domain(format!(
                "matrix is not symmetric (relative asymmetry {:.3e})",
                asym / scale
            )));
        }
        Ok(SymMatrix(m.symmetrize()))
    }

    /// Forces symmetry by averaging with the transpose.
    pub fn symmetrized(m: Mat) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        SymMatrix(m.symmetrize())
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

/// Orthogonal matrix; `Q'Q = I` within [`ORTHO_TOL`] Frobenius error.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoMatrix(Mat);

impl OrthoMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::domain("orthogonal matrix must be square"));
        }
        let defect = m.orthogonality_defect();
        if defect > ORTHO_TOL {
            return Err(Error::domain(format!(
                "matrix is not orthogonal (defect {defect:.3e})"
            )));
        }
        Ok(OrthoMatrix(m))
    }

    /// For outputs of kernels that are orthogonal by construction.
    pub(crate) fn new_unchecked(m: Mat) -> Self {
        debug_assert!(m.orthogonality_defect() < 1e-8);
        OrthoMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        OrthoMatrix(Mat::identity(n))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn transpose(&self) -> OrthoMatrix {
        OrthoMatrix(self.0.transpose())
    }
}

/// Skew-symmetric matrix; skewness enforced by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix(Mat);

impl SkewMatrix {
    /// Projects onto the skew part `(A - A')/2`.
    pub fn new(m: Mat) -> Self {
        assert!(m.is_square(), "skew matrix must be square");
        SkewMatrix(m.skew_part())
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_matrix_rejects_asymmetric() {
        let m = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn ortho_matrix_rejects_scaled_identity() {
        assert!(OrthoMatrix::new(Mat::identity(3).scale(2.0)).is_err());
        assert!(OrthoMatrix::new(Mat::identity(3)).is_ok());
    }

    #[test]
    fn skew_matrix_is_exactly_skew() {
        let m = Mat::from_rows(&[&[1.0, 2.0], &[-3.0, 4.0]]);
        let s = SkewMatrix::new(m);
        let sum = s.as_mat() + &s.as_mat().transpose();
        assert_eq!(sum.norm_fro(), 0.0);
    }
}
