//! Flag manifolds in the incremental-subspace representation: ordered lists
//! of mutually orthogonal projectors resolving the identity.
//!
//! The extrinsic distance sums squared Frobenius norms of componentwise
//! Grassmann logarithms. The K-discrepancy deforms it with block-diagonal
//! scalings evaluated in the rotated chart at the standard flag; the two
//! differ in general because the scaling does not commute with conjugation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{grass_log, Projector};
use crate::matcore::{sym_eig_desc, Mat, OrthoMatrix, SymMatrix};

const FLAG_TOL: f64 = 1e-10;

/// Relative spectral gap required at block boundaries for the flag of
/// eigenspaces to be defined.
pub const GAP_TOL: f64 = 1e-10;

/// Type of a flag: the multiplicities (q_1, ..., q_r).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagType {
    multiplicities: Vec<usize>,
}

impl FlagType {
    pub fn new(multiplicities: Vec<usize>) -> Result<Self> {
        if multiplicities.is_empty() {
            return Err(Error::domain("flag type needs at least one block"));
        }
        if multiplicities.contains(&0) {
            return Err(Error::domain("flag type multiplicities must be positive"));
        }
        Ok(FlagType { multiplicities })
    }

    /// Number of blocks r.
    pub fn r(&self) -> usize {
        self.multiplicities.len()
    }

    /// Ambient dimension d = sum of multiplicities.
    pub fn d(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn multiplicity(&self, i: usize) -> usize {
        self.multiplicities[i]
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Cumulative sum of the first `i` multiplicities.
    pub fn cumulative(&self, i: usize) -> usize {
        self.multiplicities[..i].iter().sum()
    }

    /// Index block beta_i as a half-open range.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.cumulative(i);
        start..start + self.multiplicities[i]
    }

    /// Block index owning ambient index `k`.
    pub fn block_of(&self, k: usize) -> usize {
        let mut acc = 0;
        for (i, &q) in self.multiplicities.iter().enumerate() {
            acc += q;
            if k < acc {
                return i;
            }
        }
        panic!("index {k} outside ambient dimension {}", self.d());
    }
}

/// Flag of type I: mutually orthogonal projectors summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Flag {
    components: Vec<Projector>,
}

impl Flag {
    pub fn new(components: Vec<Projector>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("flag needs at least one component"));
        }
        let d = components[0].dim();
        if components.iter().any(|p| p.dim() != d) {
            return Err(Error::domain("flag components have mixed dimensions"));
        }
        let mut sum = Mat::zeros(d, d);
        for p in &components {
            sum = &sum + p.as_mat();
        }
        let resolution = (&sum - &Mat::identity(d)).norm_fro();
        if resolution > FLAG_TOL {
            return Err(Error::domain(format!(
                "flag components do not resolve the identity (defect {resolution:.3e})"
            )));
        }
        for i in 0..components.len() {
            for j in (i + 1)..components.len() {
                let prod = components[i].as_mat().matmul(components[j].as_mat());
                let defect = prod.norm_fro();
                if defect > FLAG_TOL {
                    return Err(Error::domain(format!(
                        "flag components {i} and {j} are not orthogonal (defect {defect:.3e})"
                    )));
                }
            }
        }
        Ok(Flag { components })
    }

    pub fn components(&self) -> &[Projector] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Projector {
        &self.components[i]
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    pub fn d(&self) -> usize {
        self.components[0].dim()
    }

    pub fn flag_type(&self) -> FlagType {
        FlagType::new(self.components.iter().map(|p| p.rank()).collect())
            .expect("flag components always have positive rank")
    }

    /// JSON document: type vector plus row-major projector matrices.
    pub fn to_json(&self) -> String {
        let doc = FlagDoc {
            flag_type: self.flag_type().multiplicities().to_vec(),
            projectors: self
                .components
                .iter()
                .map(|p| {
                    (0..p.dim())
                        .map(|i| p.as_mat().row(i).to_vec())
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("flag serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Flag> {
        let doc: FlagDoc = serde_json::from_str(text)
            .map_err(|e| Error::domain(format!("invalid flag JSON: {e}")))?;
        let ftype = FlagType::new(doc.flag_type)?;
        if doc.projectors.len() != ftype.r() {
            return Err(Error::domain("flag JSON: component count does not match type"));
        }
        let d = ftype.d();
        let mut components = Vec::with_capacity(ftype.r());
        for (i, rows) in doc.projectors.iter().enumerate() {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::domain(format!(
                    "flag JSON: projector {i} is not {d}x{d}"
                )));
            }
            let m = Mat::from_fn(d, d, |a, b| rows[a][b]);
            let p = Projector::new(m)?;
            if p.rank() != ftype.multiplicity(i) {
                return Err(Error::domain(format!(
                    "flag JSON: projector {i} has rank {} but type says {}",
                    p.rank(),
                    ftype.multiplicity(i)
                )));
            }
            components.push(p);
        }
        Flag::new(components)
    }
}

#[derive(Serialize, Deserialize)]
struct FlagDoc {
    #[serde(rename = "type")]
    flag_type: Vec<usize>,
    projectors: Vec<Vec<Vec<f64>>>,
}

/// Block scalings (K^1, ..., K^r): each K^i is diagonal, constant on every
/// index block, with identity on block i.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockScaling {
    flag_type: FlagType,
    factors: Vec<Vec<f64>>,
}

impl BlockScaling {
    pub fn new(flag_type: FlagType, factors: Vec<Vec<f64>>) -> Result<Self> {
        let r = flag_type.r();
        if factors.len() != r || factors.iter().any(|f| f.len() != r) {
            return Err(Error::domain("block scaling needs an r x r factor table"));
        }
        for (i, row) in factors.iter().enumerate() {
            if (row[i] - 1.0).abs() > 1e-14 {
                return Err(Error::domain(format!(
                    "block scaling K^{i} must be the identity on block {i}"
                )));
            }
            if row.iter().any(|&f| !f.is_finite() || f <= 0.0) {
                return Err(Error::domain("block scaling factors must be positive and finite"));
            }
        }
        Ok(BlockScaling { flag_type, factors })
    }

    /// All factors one: the discrepancy collapses to the extrinsic distance.
    pub fn identity(flag_type: FlagType) -> Self {
        let r = flag_type.r();
        BlockScaling { flag_type, factors: vec![vec![1.0; r]; r] }
    }

    pub fn flag_type(&self) -> &FlagType {
        &self.flag_type
    }

    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.factors[i][j]
    }

    /// The d x d diagonal matrix K^i.
    pub fn matrix(&self, i: usize) -> Mat {
        let d = self.flag_type.d();
        let mut m = Mat::zeros(d, d);
        for k in 0..d {
            m[(k, k)] = self.factors[i][self.flag_type.block_of(k)];
        }
        m
    }

    /// Diagonal weight vector of K^i.
    fn weights(&self, i: usize) -> Vec<f64> {
        (0..self.flag_type.d())
            .map(|k| self.factors[i][self.flag_type.block_of(k)])
            .collect()
    }

    /// `|K^i M K^i|_F^2` for a d x d matrix, without forming the products.
    pub fn weighted_sq_norm(&self, i: usize, m: &Mat) -> f64 {
        weighted_sq_norm(m, &self.weights(i))
    }
}

/// The standard flag (P_0^1, ..., P_0^r) of diagonal block projectors.
pub fn standard_flag(flag_type: &FlagType) -> Flag {
    let d = flag_type.d();
    let components = (0..flag_type.r())
        .map(|i| {
            let range = flag_type.block_range(i);
            Projector::new(Mat::from_fn(d, d, |a, b| {
                if a == b && range.contains(&a) {
                    1.0
                } else {
                    0.0
                }
            }))
            .expect("standard block projector is valid")
        })
        .collect();
    Flag::new(components).expect("standard flag is valid")
}

/// The i-th standard projector P_0^i.
pub fn standard_projector(flag_type: &FlagType, i: usize) -> Projector {
    standard_flag(flag_type).components[i].clone()
}

/// Flag generated by the column blocks of an orthogonal matrix:
/// component i projects onto the span of columns beta_i.
pub fn flag_from_orthogonal(q: &OrthoMatrix, flag_type: &FlagType) -> Result<Flag> {
    if q.dim() != flag_type.d() {
        return Err(Error::domain("orthogonal matrix does not match the flag type dimension"));
    }
    let d = q.dim();
    let components = (0..flag_type.r())
        .map(|i| {
            let range = flag_type.block_range(i);
            let block = q.as_mat().block(0, d, range.start, range.end);
            let m = block.matmul(&block.transpose()).symmetrize();
            Projector::new(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Flag::new(components)
}

/// Flag of eigenspaces of a symmetric matrix, defined when the spectral gaps
/// at all block boundaries clear [`GAP_TOL`] relative to the top eigenvalue.
pub fn flag_of_eigenspaces(s: &SymMatrix, flag_type: &FlagType) -> Result<Flag> {
    if s.dim() != flag_type.d() {
        return Err(Error::domain("matrix does not match the flag type dimension"));
    }
    let (mu, v) = sym_eig_desc(s)?;
    let scale = mu[0].abs().max(1.0);
    for i in 1..flag_type.r() {
        let cut = flag_type.cumulative(i);
        let gap = (mu[cut - 1] - mu[cut]) / scale;
        if gap < GAP_TOL {
            return Err(Error::SpectralGap { boundary: i, gap });
        }
    }
    let d = flag_type.d();
    let components = (0..flag_type.r())
        .map(|i| {
            let range = flag_type.block_range(i);
            let block = v.as_mat().block(0, d, range.start, range.end);
            let m = block.matmul(&block.transpose()).symmetrize();
            Projector::new(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Flag::new(components)
}

/// Componentwise conjugation (Q P_i Q')_i.
pub fn group_action(q: &OrthoMatrix, f: &Flag) -> Result<Flag> {
    if q.dim() != f.d() {
        return Err(Error::domain("group action dimension mismatch"));
    }
    Flag::new(f.components().iter().map(|p| p.conjugate(q)).collect())
}

fn check_same_type(f: &Flag, g: &Flag) -> Result<()> {
    if f.flag_type() != g.flag_type() {
        return Err(Error::domain("flags have different types"));
    }
    Ok(())
}

/// Extrinsic distance: root of the sum over components of squared Frobenius
/// norms of the Grassmann logarithms. Cut-locus failures carry the index of
/// the offending component.
pub fn extrinsic_distance(f: &Flag, g: &Flag) -> Result<f64> {
    check_same_type(f, g)?;
    let mut total = 0.0;
    for (i, (p, r)) in f.components().iter().zip(g.components()).enumerate() {
        let t = grass_log(p, r).map_err(|e| tag_component(e, i))?;
        total += t.norm().powi(2);
    }
    Ok(total.sqrt())
}

fn tag_component(e: Error, i: usize) -> Error {
    match e {
        Error::CutLocus { .. } => Error::CutLocus { component: Some(i) },
        other => other,
    }
}

/// K-discrepancy between an orthogonal representative `q` and a flag `r`:
/// `sqrt(sum_i |K^i Log_{P_0^i}(Q' R_i Q) K^i|_F^2)`.
///
/// Depends on `q` only through the flag it generates, and vanishes iff that
/// flag equals `r`.
pub fn k_discrepancy(scaling: &BlockScaling, q: &OrthoMatrix, r: &Flag) -> Result<f64> {
    let flag_type = scaling.flag_type();
    if r.flag_type() != *flag_type {
        return Err(Error::domain("flag does not match the scaling type"));
    }
    if q.dim() != flag_type.d() {
        return Err(Error::domain("orthogonal matrix does not match the scaling dimension"));
    }
    let p0 = standard_flag(flag_type);
    let mut total = 0.0;
    for i in 0..flag_type.r() {
        total += k_discrepancy_component(scaling, q, r.component(i), &p0.components()[i], i)?;
    }
    Ok(total.sqrt())
}

/// One component delta^i of the squared K-discrepancy.
pub(crate) fn k_discrepancy_component(
    scaling: &BlockScaling,
    q: &OrthoMatrix,
    r_i: &Projector,
    p0_i: &Projector,
    i: usize,
) -> Result<f64> {
    let rotated = r_i.conjugate(&q.transpose());
    let t = grass_log(p0_i, &rotated).map_err(|e| tag_component(e, i))?;
    Ok(weighted_sq_norm(t.as_mat(), &scaling.weights(i)))
}

/// `|K Delta K|_F^2` for diagonal K with weight vector `w`.
fn weighted_sq_norm(delta: &Mat, w: &[f64]) -> f64 {
    let d = delta.rows();
    let mut acc = 0.0;
    for a in 0..d {
        for b in 0..d {
            let v = w[a] * delta[(a, b)] * w[b];
            acc += v * v;
        }
    }
    acc
}

/// Builds an orthogonal matrix whose column blocks generate the flag.
pub fn orthogonal_from_flag(f: &Flag) -> Result<OrthoMatrix> {
    let d = f.d();
    let mut m = Mat::zeros(d, d);
    let mut col = 0;
    for p in f.components() {
        let b = p.basis()?;
        m.set_block(0, col, b.as_mat());
        col += p.rank();
    }
    OrthoMatrix::new(m)
}

/// K-discrepancy between two flags: evaluated through any orthogonal matrix
/// generating the first flag (well-defined by the right-invariance of the
/// discrepancy).
pub fn k_discrepancy_flags(scaling: &BlockScaling, p: &Flag, r: &Flag) -> Result<f64> {
    check_same_type(p, r)?;
    let q = orthogonal_from_flag(p)?;
    k_discrepancy(scaling, &q, r)
}
