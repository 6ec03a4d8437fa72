//! Cyclic Jacobi eigendecomposition of symmetric matrices and the
//! sign-normalised eigenvector map.

use crate::error::{Error, Result};
use crate::matcore::mat::Mat;
use crate::matcore::{OrthoMatrix, SymMatrix};

const MAX_SWEEPS: usize = 64;

/// Relative gap below which two eigenvalues count as repeated.
pub const REPEATED_EIG_TOL: f64 = 1e-10;

/// Eigendecomposition `S = V diag(mu) V'` with `mu` non-increasing and `V`
/// orthogonal. Uses cyclic Jacobi rotations, which keep `V` orthogonal to
/// machine precision regardless of eigenvalue clustering.
pub fn sym_eig_desc(s: &SymMatrix) -> Result<(Vec<f64>, OrthoMatrix)> {
    let n = s.as_mat().rows();
    let mut a = s.as_mat().clone();
    let mut v = Mat::identity(n);
    let scale = a.norm_fro().max(1e-300);
    let tol = 1e-15 * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-2 * tol / (n as f64) {
                    continue;
                }
                let alpha = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if alpha == 0.0 {
                    1.0
                } else {
                    alpha.signum() / (alpha.abs() + (1.0 + alpha * alpha).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // A <- J' A J restricted to rows/columns p, q.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    // Stable descending sort; exact ties keep their original order, so
    // diagonal input reproduces the identity eigenvector matrix.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let mu: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vs = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((mu, OrthoMatrix::new_unchecked(vs)))
}

/// Eigendecomposition plus the sign normalisation of [`eigvec_map_psi`],
/// for callers that also need the spectrum.
pub fn sym_eig_psi(s: &SymMatrix) -> Result<(Vec<f64>, OrthoMatrix)> {
    let n = s.as_mat().rows();
    if is_nonincreasing_diagonal(s.as_mat()) {
        let diag: Vec<f64> = (0..n).map(|i| s.as_mat()[(i, i)]).collect();
        return Ok((diag, OrthoMatrix::new_unchecked(Mat::identity(n))));
    }
    let (mu, v) = sym_eig_desc(s)?;
    let scale = mu[0].abs().max(1.0);
    for k in 0..n.saturating_sub(1) {
        let gap = (mu[k] - mu[k + 1]) / scale;
        if gap < REPEATED_EIG_TOL {
            return Err(Error::domain(format!(
                "eigenvector map undefined: repeated eigenvalues at positions {k}, {} (relative gap {gap:.3e})",
                k + 1
            )));
        }
    }
    Ok((mu, fix_column_signs(v.into_mat())))
}

/// Eigenvector map: column `k` is the unit eigenvector of the `k`-th largest
/// eigenvalue whose `k`-th entry is non-negative. Diagonal input with
/// non-increasing entries maps to the identity; any other input must have
/// all-distinct eigenvalues.
pub fn eigvec_map_psi(s: &SymMatrix) -> Result<OrthoMatrix> {
    sym_eig_psi(s).map(|(_, e)| e)
}

fn is_nonincreasing_diagonal(m: &Mat) -> bool {
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    let tol = 1e-12 * scale;
    if m.max_abs_offdiag() > tol {
        return false;
    }
    // Ties broken by round-off still count as non-increasing.
    (1..n).all(|i| m[(i, i)] <= m[(i - 1, i - 1)] + tol)
}

/// Applies the non-negative-entry sign rule column by column. When the
/// pivotal entry is numerically zero the sign comes from the column's
/// largest-magnitude entry instead.
fn fix_column_signs(mut v: Mat) -> OrthoMatrix {
    let n = v.rows();
    for k in 0..n {
        let pivot = v[(k, k)];
        let sign_source = if pivot.abs() >= 1e-12 {
            pivot
        } else {
            let mut best = 0usize;
            for j in 1..n {
                if v[(j, k)].abs() > v[(best, k)].abs() {
                    best = j;
                }
            }
            v[(best, k)]
        };
        if sign_source < 0.0 {
            for j in 0..n {
                v[(j, k)] = -v[(j, k)];
            }
        }
    }
    OrthoMatrix::new_unchecked(v)
}
