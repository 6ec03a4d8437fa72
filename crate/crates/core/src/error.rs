//! Error taxonomy shared by every module of the crate.

use std::fmt;

/// Errors produced by geometry, linear algebra and statistics routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violates a precondition (dimension mismatch, invalid range, ...).
    Domain(String),
    /// A pair of points lies on (or numerically too close to) a cut locus.
    /// `component` identifies the offending flag component when applicable.
    CutLocus { component: Option<usize> },
    /// A spectral gap required at a block boundary is below tolerance.
    SpectralGap { boundary: usize, gap: f64 },
    /// Adjacent block eigenvalue means coincide, so the scaling blows up.
    DegenerateScaling { blocks: (usize, usize) },
    /// An iterative kernel failed to converge within its budget.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::CutLocus { component: Some(i) } => {
                write!(f, "cut locus reached at flag component {i}")
            }
            Error::CutLocus { component: None } => write!(f, "cut locus reached"),
            Error::SpectralGap { boundary, gap } => {
                write!(f, "spectral gap at block boundary {boundary} below tolerance (gap = {gap:.3e})")
            }
            Error::DegenerateScaling { blocks: (i, j) } => {
                write!(f, "degenerate scaling: block eigenvalue means {i} and {j} coincide")
            }
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True when the error marks a cut-locus event (callers map these to truncation).
    pub fn is_cut_locus(&self) -> bool {
        matches!(self, Error::CutLocus { .. })
    }
}
