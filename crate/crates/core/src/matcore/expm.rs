//! Matrix exponential, principal logarithm of rotations, and the polar
//! projection onto the orthogonal group.

use crate::error::{Error, Result};
use crate::matcore::eig::sym_eig_desc;
use crate::matcore::mat::Mat;
use crate::matcore::{OrthoMatrix, SkewMatrix, SymMatrix};

/// Rotation angles whose sine falls below this on the `cos < 0` side count
/// as lying on the branch cut.
const SIN_AT_PI_TOL: f64 = 1e-9;

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm: matrix must be square");
    let n = a.rows();
    let norm = a.norm_fro();
    let s = if norm > 0.5 {
        ((norm / 0.5).log2().ceil() as u32).min(60)
    } else {
        0
    };
    let b = a.scale(0.5_f64.powi(s as i32));

    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=40u32 {
        term = term.matmul(&b).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.max_abs() <= 1e-17 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.matmul(&sum);
    }
    sum
}

/// Principal logarithm of a rotation matrix (special orthogonal, no
/// eigenvalue at -1).
///
/// Works through the invariant-plane decomposition, the real-arithmetic
/// equivalent of logging the 2x2 rotation blocks of the real Schur form:
/// the symmetric part `(Q + Q')/2` carries `cos(theta)` of each rotation
/// angle, the skew part restricted to the same plane has norm `sin(theta)`,
/// and `log Q = skew(Q) * f((Q + Q')/2)` with `f(cos theta) = theta / sin
/// theta`. Each angle comes from `atan2(sin, cos)`, which stays well
/// conditioned arbitrarily close to the branch cut at pi.
pub fn logm_rotation(q: &OrthoMatrix) -> Result<SkewMatrix> {
    let qm = q.as_mat();
    let n = qm.rows();
    let sym = SymMatrix::symmetrized(qm.symmetrize());
    let (cosines, w) = sym_eig_desc(&sym)?;
    let skew = qm.skew_part();
    let skew_w = skew.matmul(w.as_mat());
    let mut factors = vec![0.0; n];
    for k in 0..n {
        let c = cosines[k];
        // |skew . w_k| equals sin(theta_k) on the invariant plane of w_k.
        let s = (0..n).map(|i| skew_w[(i, k)] * skew_w[(i, k)]).sum::<f64>().sqrt();
        if c < 0.0 && s < SIN_AT_PI_TOL {
            return Err(Error::CutLocus { component: None });
        }
        let theta = s.atan2(c);
        factors[k] = if theta < 1e-4 {
            let t2 = theta * theta;
            1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
        } else {
            theta / s
        };
    }
    let g = w
        .as_mat()
        .matmul(&Mat::diag(&factors))
        .matmul(&w.as_mat().transpose());
    Ok(SkewMatrix::new(skew.matmul(&g)))
}

/// Nearest orthogonal matrix `M (M'M)^{-1/2}`, used to scrub round-off from
/// products that are orthogonal in exact arithmetic.
pub fn polar_orthogonal(m: &Mat) -> Result<Mat> {
    assert!(m.is_square(), "polar_orthogonal: matrix must be square");
    let gram = SymMatrix::symmetrized(m.tr_matmul(m));
    let (mu, w) = sym_eig_desc(&gram)?;
    if mu.iter().any(|&v| v <= 1e-24) {
        return Err(Error::Numeric(
            "polar projection of a rank-deficient matrix".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = mu.iter().map(|&v| 1.0 / v.sqrt()).collect();
    let g = w
        .as_mat()
        .matmul(&Mat::diag(&inv_sqrt))
        .matmul(&w.as_mat().transpose());
    Ok(m.matmul(&g))
}
