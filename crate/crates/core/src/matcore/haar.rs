//! Haar-distributed orthogonal matrices via sign-fixed QR of Gaussian
//! matrices, plus the conditional variant with positive diagonal.

use crate::matcore::mat::Mat;
use crate::matcore::rng::RngStream;
use crate::matcore::OrthoMatrix;

/// Householder QR. Returns `(Q, R)` with `Q` orthogonal and `R` upper
/// triangular; no sign convention is applied here.
pub(crate) fn qr_decompose(a: &Mat) -> (Mat, Mat) {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    let mut q = Mat::identity(m);
    let steps = n.min(m.saturating_sub(1));
    for k in 0..steps {
        let mut norm2 = 0.0;
        for i in k..m {
            norm2 += r[(i, k)] * r[(i, k)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = r[(k, k)] - alpha;
        for i in (k + 1)..m {
            v[i - k] = r[(i, k)];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2 v v'/v'v) R applied to rows k..m
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r[(i, j)];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i - k];
            }
        }
        // Q <- Q (I - 2 v v'/v'v) applied to columns k..m
        for i in 0..m {
            let mut dot = 0.0;
            for j in k..m {
                dot += q[(i, j)] * v[j - k];
            }
            let f = 2.0 * dot / vnorm2;
            for j in k..m {
                q[(i, j)] -= f * v[j - k];
            }
        }
    }
    (q, r)
}

/// Draw from the Haar (uniform) distribution on O(q): orthonormalise a
/// standard Gaussian matrix with the R-diagonal sign fixed positive, which
/// makes the factorisation unique and the Q factor Haar-distributed.
pub fn haar_orthogonal(q: usize, rng: &mut RngStream) -> OrthoMatrix {
    assert!(q >= 1);
    let g = Mat::from_fn(q, q, |_, _| rng.normal());
    let (mut qm, r) = qr_decompose(&g);
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            for i in 0..q {
                qm[(i, j)] = -qm[(i, j)];
            }
        }
    }
    OrthoMatrix::new_unchecked(qm)
}

/// Draw from the conditional Haar distribution: 2^q times the Haar measure
/// restricted to matrices with all diagonal entries positive. Each Haar
/// orbit under right multiplication by diagonal sign matrices contains
/// exactly one such representative, so reflecting the columns is exact.
pub fn conditional_haar_orthogonal(q: usize, rng: &mut RngStream) -> OrthoMatrix {
    loop {
        let draw = haar_orthogonal(q, rng);
        if (0..q).any(|i| draw.as_mat()[(i, i)] == 0.0) {
            continue; // probability-zero tie; redraw
        }
        let mut m = draw.into_mat();
        for j in 0..q {
            if m[(j, j)] < 0.0 {
                for i in 0..q {
                    m[(i, j)] = -m[(i, j)];
                }
            }
        }
        return OrthoMatrix::new_unchecked(m);
    }
}
