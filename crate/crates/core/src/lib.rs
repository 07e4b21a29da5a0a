//! Manifold-embedded knowledge transfer for covariance-based time-series
//! classification.
//!
//! The pipeline recentres each domain's trial covariances at the identity
//! (centroid alignment), flattens them into tangent-space feature vectors,
//! and learns a pair of projections that pull the source and target feature
//! clouds together under a joint-probability MMD penalty. A pseudo-label
//! loop refines the target labels between solves. Source domains can be
//! ranked by transferability before a run.
//!
//! All numerical code is generic over [`Real`], implemented for `f32` and
//! `f64`. The `*64` aliases at the crate root are what the CLI and most
//! callers use.

pub mod alignment;
pub mod classify;
pub mod dte;
pub mod error;
pub mod features;
pub mod io;
pub mod mekt;
pub mod pipeline;
pub mod spd;

mod linalg;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use alignment::{AlignedDomain, DomainTrials};
pub use features::{FeatureMatrix, FeatureMode};
pub use mekt::{MektConfig, MektResult, ProjectionPair};
pub use spd::{MeanKind, MeanSolverConfig, SpdMatrix};

/// Class identifier. Classes are numbered from 1.
pub type ClassId = u32;

pub type SpdMatrix64 = SpdMatrix<f64>;
pub type SpdMatrix32 = SpdMatrix<f32>;
pub type DomainTrials64 = DomainTrials<f64>;
pub type DomainTrials32 = DomainTrials<f32>;
pub type AlignedDomain64 = AlignedDomain<f64>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type ProjectionPair64 = ProjectionPair<f64>;
pub type MektConfig64 = MektConfig<f64>;
pub type MektResult64 = MektResult<f64>;
pub type MeanSolverConfig64 = MeanSolverConfig<f64>;
