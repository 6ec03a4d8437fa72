//! The Grassmannian G(q,d) of q-dimensional subspaces, represented by
//! rank-q orthogonal projectors.
//!
//! The Riemannian exponential at `P` maps a tangent `D` to
//! `exp([D,P]) P exp(-[D,P])`; the logarithm of `R` at `P` is `[Omega, P]`
//! with `Omega = log((I - 2R)(I - 2P)) / 2`, defined off the cut locus of
//! `P`, which is reached exactly when bases `Y`, `Z` of the two ranges have
//! `rank(Y'Z) < q`.

use crate::error::{Error, Result};
use crate::matcore::{
    expm, logm_rotation, polar_orthogonal, sym_eig_desc, Mat, OrthoMatrix, SymMatrix,
};
use crate::stiefel::Frame;

/// Singular values of `Y'Z` below this threshold put a pair of projectors
/// on (numerically, too close to) the cut locus.
pub const CUT_RANK_TOL: f64 = 1e-8;

const IDEMPOTENT_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const TANGENT_TOL: f64 = 1e-10;
const BASE_MATCH_TOL: f64 = 1e-8;

/// Rank-q orthogonal projector: a point of G(q,d).
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    matrix: Mat,
    q: usize,
}

impl Projector {
    /// Validates symmetry, idempotency and integer trace, inferring the rank
    /// from the trace.
    pub fn new(matrix: Mat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::domain("projector must be square"));
        }
        let sym = SymMatrix::new(matrix).map_err(|_| {
            Error::domain("projector is not symmetric")
        })?;
        let m = sym.into_mat();
        let defect = (&m.matmul(&m) - &m).norm_fro();
        if defect > IDEMPOTENT_TOL {
            return Err(Error::domain(format!(
                "projector is not idempotent (|P^2 - P| = {defect:.3e})"
            )));
        }
        let tr = m.trace();
        let q = tr.round();
        if (tr - q).abs() > TRACE_TOL || q < 0.0 {
            return Err(Error::domain(format!(
                "projector trace {tr} is not a non-negative integer"
            )));
        }
        Ok(Projector { matrix: m, q: q as usize })
    }

    /// `UU'` for an orthonormal frame `U`.
    pub fn from_frame(u: &Frame) -> Projector {
        let m = u.as_mat().matmul(&u.as_mat().transpose());
        Projector { matrix: m.symmetrize(), q: u.q() }
    }

    /// Conjugation `Q P Q'` by an orthogonal matrix.
    pub fn conjugate(&self, q: &OrthoMatrix) -> Projector {
        let m = q.as_mat().matmul(&self.matrix).matmul(&q.as_mat().transpose());
        Projector { matrix: m.symmetrize(), q: self.q }
    }

    pub fn as_mat(&self) -> &Mat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn rank(&self) -> usize {
        self.q
    }

    /// Orthonormal basis of the range: eigenvectors of the eigenvalue-1
    /// cluster (threshold 0.5).
    pub fn basis(&self) -> Result<Frame> {
        let sym = SymMatrix::symmetrized(self.matrix.clone());
        let (mu, v) = sym_eig_desc(&sym)?;
        let count = mu.iter().filter(|&&e| e > 0.5).count();
        if count != self.q {
            return Err(Error::Numeric(format!(
                "projector spectrum does not split at 0.5: expected rank {}, found {count}",
                self.q
            )));
        }
        let d = self.dim();
        let b = Mat::from_fn(d, self.q, |i, j| v.as_mat()[(i, j)]);
        Frame::new(b)
    }
}

/// Tangent vector `delta` at `base`, satisfying `DP + PD = D`.
#[derive(Clone, Debug)]
pub struct GrassTangent {
    delta: Mat,
    base: Projector,
}

impl GrassTangent {
    pub fn new(delta: Mat, base: Projector) -> Result<Self> {
        if delta.rows() != base.dim() || !delta.is_square() {
            return Err(Error::domain("tangent dimension does not match base"));
        }
        let delta = delta.symmetrize();
        let p = base.as_mat();
        let residual = (&(&delta.matmul(p) + &p.matmul(&delta)) - &delta).norm_fro();
        if residual > TANGENT_TOL * delta.norm_fro().max(1.0) {
            return Err(Error::domain(format!(
                "tangent equation violated (residual {residual:.3e})"
            )));
        }
        Ok(GrassTangent { delta, base })
    }

    pub fn zero(base: Projector) -> Self {
        let d = base.dim();
        GrassTangent { delta: Mat::zeros(d, d), base }
    }

    pub fn as_mat(&self) -> &Mat {
        &self.delta
    }

    pub fn base(&self) -> &Projector {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.delta.norm_fro()
    }

    pub fn scaled(&self, s: f64) -> GrassTangent {
        GrassTangent { delta: self.delta.scale(s), base: self.base.clone() }
    }
}

fn check_same_space(p: &Projector, r: &Projector) -> Result<()> {
    if p.dim() != r.dim() {
        return Err(Error::domain("projectors live in different ambient dimensions"));
    }
    if p.rank() != r.rank() {
        return Err(Error::domain(format!(
            "rank mismatch: {} vs {}",
            p.rank(),
            r.rank()
        )));
    }
    Ok(())
}

/// Smallest singular value of `Y'Z` for orthonormal bases of the two ranges.
fn min_cross_singular_value(p: &Projector, r: &Projector) -> Result<f64> {
    let y = p.basis()?;
    let z = r.basis()?;
    let b = y.as_mat().tr_matmul(z.as_mat());
    let gram = SymMatrix::symmetrized(b.tr_matmul(&b));
    let (mu, _) = sym_eig_desc(&gram)?;
    let min = mu.last().copied().unwrap_or(0.0).max(0.0);
    Ok(min.sqrt())
}

/// True iff `R` lies in the cut locus of `P` (numerically: the smallest
/// singular value of `Y'Z` falls below [`CUT_RANK_TOL`]). Symmetric in its
/// arguments.
pub fn in_cut_locus(p: &Projector, r: &Projector) -> Result<bool> {
    check_same_space(p, r)?;
    Ok(min_cross_singular_value(p, r)? < CUT_RANK_TOL)
}

/// Riemannian logarithm of `R` at `P`.
pub fn grass_log(p: &Projector, r: &Projector) -> Result<GrassTangent> {
    check_same_space(p, r)?;
    if in_cut_locus(p, r)? {
        return Err(Error::CutLocus { component: None });
    }
    let d = p.dim();
    let ident = Mat::identity(d);
    let refl_r = &ident - &r.as_mat().scale(2.0);
    let refl_p = &ident - &p.as_mat().scale(2.0);
    // The product of the two reflections is orthogonal in exact arithmetic;
    // project back before taking the logarithm.
    let product = polar_orthogonal(&refl_r.matmul(&refl_p))?;
    let omega = logm_rotation(&OrthoMatrix::new_unchecked(product))?
        .into_mat()
        .scale(0.5);
    let delta = omega.commutator(p.as_mat());
    GrassTangent::new(delta, p.clone())
}

/// Riemannian exponential of the tangent `t` based at `p`.
pub fn grass_exp(p: &Projector, t: &GrassTangent) -> Result<Projector> {
    if (t.base().as_mat() - p.as_mat()).norm_fro() > BASE_MATCH_TOL {
        return Err(Error::domain("tangent is based at a different projector"));
    }
    let bracket = t.as_mat().commutator(p.as_mat());
    let rot = expm(&bracket);
    let moved = rot.matmul(p.as_mat()).matmul(&rot.transpose());
    Projector::new(moved.symmetrize())
}

/// Geodesic-length proxy `|Log_P(R)|_F`; zero iff the projectors coincide.
pub fn grass_dist(p: &Projector, r: &Projector) -> Result<f64> {
    Ok(grass_log(p, r)?.norm())
}
