//! Riemannian computation on Grassmann, Stiefel and flag manifolds, with
//! asymptotic inference for the flag of principal subspaces of a Gaussian
//! covariance matrix.
//!
//! The crate provides:
//! - [`matcore`]: dense symmetric eigendecomposition, matrix exponential and
//!   rotation logarithm, chi-square distribution functions, Haar sampling;
//! - [`grassmann`]: projector-based Grassmannians with closed-form Exp/Log,
//!   cut-locus detection and distance;
//! - [`stiefel`]: frames and holonomy transport between fibers;
//! - [`flag`]: flags as mutually orthogonal projectors, extrinsic distance
//!   and the K-weighted discrepancy;
//! - [`inference`]: the pivotal chi-square statistic for the sample
//!   eigenflag, confidence regions and hypothesis tests;
//! - [`montecarlo`]: a reproducible simulation harness validating the limit
//!   theorems at desk scale.

pub mod error;
pub mod flag;
pub mod grassmann;
pub mod inference;
pub mod matcore;
pub mod montecarlo;
pub mod stiefel;

pub use error::{Error, Result};
