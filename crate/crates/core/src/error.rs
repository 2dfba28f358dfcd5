use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {index} out of range for dimension {dim} (coordinates are 1-based)")]
    CoordinateOutOfRange { index: usize, dim: usize },

    #[error("kernel evaluated on the diagonal x = y")]
    SingularInput,

    #[error("|x - y| = {distance:e} is below the near-diagonal guard {threshold:e}")]
    NearDiagonal { distance: f64, threshold: f64 },

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (partial value {partial:e}, error estimate {error:e})"
    )]
    NonConvergence {
        partial: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("evaluation point lies inside the support; principal values are not supported")]
    InsideSupport,

    #[error("region is not admissible: {0}")]
    NotAdmissible(String),

    #[error("invalid atom: {0}")]
    InvalidAtom(String),

    #[error("degenerate ladder: {0}")]
    DegenerateLadder(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing prerequisite verdict: {0}")]
    MissingVerdict(String),
}

pub type Result<T> = std::result::Result<T, Error>;
