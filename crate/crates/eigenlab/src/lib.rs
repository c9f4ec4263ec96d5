//! Numerical laboratory for harmonic eigenmaps into ellipsoids.
//!
//! The crate solves the interior Laplace eigenmap equation and its
//! free-boundary (Steklov) variant on the unit disk / half-disk with P1
//! finite elements, builds the gauge-theoretic decompositions discretely
//! (Uhlenbeck frame, Rivière pair, ∂̄-frame via the Cauchy transform), and
//! measures the regularity estimates on solved instances, including
//! dimension-independence sweeps over the number of target coordinates.
//!
//! Laplacian convention: `Δ = −div ∇` everywhere. The gauge identities are
//! stated in the analysts' convention internally where noted; see the
//! module docs of [`gauge`] for the translation table.

pub mod cauchy;
pub mod eig;
pub mod eigenmap;
pub mod ellipsoid;
pub mod gauge;
pub mod mesh;
pub mod par;
pub mod pde;
pub mod report;
pub mod rng;
pub mod sparse;
pub mod verify;

pub use ellipsoid::{AmbientPoint, EllipsoidSpec};
pub use mesh::{DiskMesh, Domain, VertexTag};
pub use report::{EstimateEntry, EstimateReport, GateStatus};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero ambient point: t(x) is undefined")]
    ZeroPoint,
    #[error("non-finite input")]
    NonFinite,
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("point not on the ellipsoid: |x|_L - 1 = {0:e}")]
    OffEllipsoid(f64),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("boundary data off the ellipsoid by {0:e}")]
    BoundaryData(f64),
    #[error("symmetrization outside its validity regime: min |u|_s^2 = {0}")]
    SymmetrizationRegime(f64),
    #[error("fixed-point contraction failed: measured rate {0}")]
    ContractionFailure(f64),
    #[error("gate not met: {0}")]
    GateNotMet(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
