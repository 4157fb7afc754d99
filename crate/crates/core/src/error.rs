//! Crate-wide error type.
//!
//! Numeric diagnostics are stored as `f64` regardless of the scalar type the
//! solver ran with, so the error type stays non-generic.

use thiserror::Error;

/// Errors produced by lattice construction, density validation, and the
/// solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Lattice dimensions violate the stencil requirements.
    #[error("invalid lattice dimensions: nt={nt}, nx={nx} (need nt >= 3, nx >= 5)")]
    InvalidDimensions { nt: usize, nx: usize },

    /// Lattice domain bounds are not an interval.
    #[error("invalid lattice domain: x_lo={x_lo} must be < x_hi={x_hi}")]
    InvalidDomain { x_lo: f64, x_hi: f64 },

    /// A field was constructed with the wrong shape or non-finite entries.
    #[error("invalid field data: {0}")]
    InvalidField(String),

    /// A sampled density has no representable mass anywhere on the grid.
    #[error("degenerate density: all sampled values below {threshold:e}")]
    DegenerateDensity { threshold: f64 },

    /// A row cannot be normalized because its mass is not positive.
    #[error("zero-mass density row (trapezoidal mass {mass:e})")]
    ZeroMass { mass: f64 },

    /// Too few strikes to form second differences.
    #[error("insufficient strikes: got {got}, need at least {need}")]
    InsufficientStrikes { got: usize, need: usize },

    /// Strikes must be strictly increasing.
    #[error("strikes not strictly increasing at index {index}")]
    StrikesNotIncreasing { index: usize },

    /// Option-chain curvature vanished everywhere after clipping.
    #[error("all-zero density recovered from option prices")]
    AllZeroDensity,

    /// Marginals do not admit a martingale transport.
    #[error("convex order violated: {reason}")]
    ConvexOrderViolated { reason: String },

    /// Generic input validation failure (named constraint).
    #[error("validation error: {0}")]
    Validation(String),

    /// The assembled Step-A operator failed its symmetry or definiteness probes.
    #[error("operator assembly failed: {0}")]
    AssemblyFailed(String),

    /// The linear solve could not reach the requested residual.
    #[error(
        "linear solver failure: relative residual {achieved:e} above tolerance {required:e} \
         after {iterations} refinement passes"
    )]
    LinearSolverFailure {
        achieved: f64,
        required: f64,
        iterations: usize,
    },

    /// Pointwise projection onto the constraint set did not converge.
    #[error("projection did not converge after {iterations} iterations (node {node:?})")]
    ProjectionNoConvergence {
        iterations: usize,
        /// `(t_index, x_index)` when the failure happened inside a field sweep.
        node: Option<(usize, usize)>,
    },

    /// A solver step produced a non-finite value.
    #[error("numeric failure at iteration {iteration}: {what}")]
    NumericFailure { iteration: usize, what: String },

    /// No node clears the reliability threshold when extracting the surface.
    #[error("empty mask: no node has density >= {threshold:e}")]
    EmptyMask { threshold: f64 },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
