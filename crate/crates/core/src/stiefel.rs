//! Stiefel frames and holonomy transport between fibers of the projection
//! `U -> UU'` onto the Grassmannian.
//!
//! The holonomy map carries a frame along the horizontal lift of the
//! minimizing Grassmann geodesic: with `D = Log_P(R)`, `V = [U | DU]` and
//! `C = U'D^2U`, the transported frame is the first q columns of
//! `V exp([[0, -C], [I, 0]])`.

use crate::error::{Error, Result};
use crate::grassmann::{grass_log, Projector};
use crate::matcore::{expm, Mat};

const FRAME_TOL: f64 = 1e-10;
const FIBER_TOL: f64 = 1e-8;

/// d x q matrix with orthonormal columns: a point of St(q,d).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    matrix: Mat,
}

impl Frame {
    pub fn new(matrix: Mat) -> Result<Self> {
        if matrix.cols() > matrix.rows() {
            return Err(Error::domain("frame has more columns than rows"));
        }
        let defect = matrix.orthogonality_defect();
        if defect > FRAME_TOL {
            return Err(Error::domain(format!(
                "frame columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Frame { matrix })
    }

    pub fn as_mat(&self) -> &Mat {
        &self.matrix
    }

    pub fn d(&self) -> usize {
        self.matrix.rows()
    }

    pub fn q(&self) -> usize {
        self.matrix.cols()
    }

    /// The projector `UU'` onto the spanned subspace.
    pub fn projector(&self) -> Projector {
        Projector::from_frame(self)
    }
}

/// Transports `u` from the fiber of `p` to the fiber of `r` along the
/// horizontal lift of the minimizing geodesic.
pub fn holonomy(p: &Projector, r: &Projector, u: &Frame) -> Result<Frame> {
    if u.d() != p.dim() || u.q() != p.rank() {
        return Err(Error::domain("frame shape does not match the projector"));
    }
    let proj_u = u.projector();
    if (proj_u.as_mat() - p.as_mat()).norm_fro() > FIBER_TOL {
        return Err(Error::domain("frame does not generate the range of the base projector"));
    }
    let q = u.q();
    let delta = grass_log(p, r)?; // cut-locus errors propagate
    let dm = delta.as_mat();
    let du = dm.matmul(u.as_mat());
    let v = u.as_mat().hcat(&du);
    // C = U' D^2 U, symmetrized so round-off does not leak into the exponential.
    let c = u.as_mat().tr_matmul(&dm.matmul(&du)).symmetrize();
    let mut block = Mat::zeros(2 * q, 2 * q);
    block.set_block(0, q, &c.scale(-1.0));
    block.set_block(q, 0, &Mat::identity(q));
    let moved = v.matmul(&expm(&block).block(0, 2 * q, 0, q));
    Frame::new(moved)
}

/// Splits a frame into its projected Grassmann point and the holonomy
/// transport of the frame into the fiber of `r`.
pub fn geodesic_decomposition(u: &Frame, r: &Projector) -> Result<(Projector, Frame)> {
    let p = u.projector();
    let v = holonomy(&p, r, u)?;
    Ok((p, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::in_cut_locus;
    use crate::matcore::{haar_orthogonal, RngStream};

    fn random_pair(d: usize, q: usize, rng: &mut RngStream) -> (Projector, Projector, Frame) {
        loop {
            let g1 = haar_orthogonal(d, rng);
            let g2 = haar_orthogonal(d, rng);
            let u = Frame::new(g1.as_mat().block(0, d, 0, q)).unwrap();
            let w = Frame::new(g2.as_mat().block(0, d, 0, q)).unwrap();
            let p = u.projector();
            let r = w.projector();
            if !in_cut_locus(&p, &r).unwrap() {
                return (p, r, u);
            }
        }
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::new(Mat::identity(3)).is_ok());
        assert!(Frame::new(Mat::identity(3).scale(0.9)).is_err());
        assert!(Frame::new(Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn holonomy_at_zero_distance_is_identity() {
        let mut rng = RngStream::from_seed(31);
        let (p, _, u) = random_pair(5, 2, &mut rng);
        let v = holonomy(&p, &p, &u).unwrap();
        assert!((v.as_mat() - u.as_mat()).norm_fro() < 1e-10);
    }

    #[test]
    fn holonomy_lands_in_target_fiber() {
        let mut rng = RngStream::from_seed(32);
        for (d, q) in [(4usize, 1usize), (5, 2), (6, 3)] {
            for _ in 0..10 {
                let (p, r, u) = random_pair(d, q, &mut rng);
                let v = holonomy(&p, &r, &u).unwrap();
                assert!(v.as_mat().orthogonality_defect() < 1e-10);
                let fiber_err = (v.projector().as_mat() - r.as_mat()).norm_fro();
                assert!(fiber_err < 1e-8, "d={d} q={q} err={fiber_err:.3e}");
            }
        }
    }

    #[test]
    fn holonomy_inverse_property() {
        let mut rng = RngStream::from_seed(33);
        for _ in 0..20 {
            let (p, r, u) = random_pair(5, 2, &mut rng);
            let v = holonomy(&p, &r, &u).unwrap();
            let back = holonomy(&r, &p, &v).unwrap();
            assert!((back.as_mat() - u.as_mat()).norm_fro() < 1e-8);
        }
    }

    #[test]
    fn holonomy_rejects_frame_outside_fiber() {
        let mut rng = RngStream::from_seed(34);
        let (p, r, _) = random_pair(5, 2, &mut rng);
        let (_, _, other) = random_pair(5, 2, &mut rng);
        assert!(matches!(holonomy(&p, &r, &other), Err(Error::Domain(_))));
    }

    #[test]
    fn holonomy_propagates_cut_locus() {
        let e1 = Frame::new(Mat::from_rows(&[&[1.0], &[0.0]])).unwrap();
        let e2 = Frame::new(Mat::from_rows(&[&[0.0], &[1.0]])).unwrap();
        let p = e1.projector();
        let r = e2.projector();
        assert!(matches!(holonomy(&p, &r, &e1), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn decomposition_of_fiber_member_is_trivial() {
        let mut rng = RngStream::from_seed(35);
        let (_, r, _) = random_pair(5, 2, &mut rng);
        let u = r.basis().unwrap();
        let (p, v) = geodesic_decomposition(&u, &r).unwrap();
        assert!((p.as_mat() - r.as_mat()).norm_fro() < 1e-10);
        assert!((v.as_mat() - u.as_mat()).norm_fro() < 1e-9);
    }

    #[test]
    fn decomposition_recomposes() {
        let mut rng = RngStream::from_seed(36);
        for _ in 0..20 {
            let (_, r, u) = random_pair(6, 2, &mut rng);
            let (p, v) = geodesic_decomposition(&u, &r).unwrap();
            let back = holonomy(&r, &p, &v).unwrap();
            assert!((back.as_mat() - u.as_mat()).norm_fro() < 1e-8);
        }
    }

    #[test]
    fn two_dimensional_holonomy_has_positive_sign() {
        // For U = (cos t, sin t)' and R = span(e1) with |t| < pi/2, the
        // transported frame is exactly +e1.
        for theta in [-1.2_f64, -0.4, 0.3, 1.3] {
            let u = Frame::new(Mat::from_rows(&[&[theta.cos()], &[theta.sin()]])).unwrap();
            let r = Frame::new(Mat::from_rows(&[&[1.0], &[0.0]])).unwrap().projector();
            let (p, v) = geodesic_decomposition(&u, &r).unwrap();
            assert!((p.as_mat() - u.projector().as_mat()).norm_fro() < 1e-14);
            assert!((v.as_mat()[(0, 0)] - 1.0).abs() < 1e-10, "theta={theta}");
            assert!(v.as_mat()[(1, 0)].abs() < 1e-10);
        }
    }
}
