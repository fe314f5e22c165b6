use thiserror::Error;

/// Failures raised by the lattice, multiplier and positivity machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("axis {axis}: site count {sites} must be positive and even")]
    OddSites { axis: usize, sites: usize },
    #[error("axis {axis}: spacing must be positive and finite")]
    NonPositiveSpacing { axis: usize },
    #[error("grid has no axis {axis}")]
    InvalidAxis { axis: usize },
    #[error("grid must have at least one axis")]
    EmptyGrid,
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("hermitian part of the symbol is not strictly positive at momentum index {index}")]
    HermitianPartNotPositive { index: usize },
    #[error("multiplier is not symmetric (max defect {defect:e}); not a covariance")]
    NotACovariance { defect: f64 },
    #[error("time-zero restriction needs at least one spatial axis")]
    NoSpatialAxis,
    #[error("test function {field} is nonzero at site {site}, outside the chosen half-space")]
    SupportError { field: usize, site: usize },
    #[error("pairing oracle limited to at most {max} points, got {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("every gram eigenvalue is below the rank threshold")]
    ZeroSpace,
    #[error("transfer matrix is singular; hamiltonian undefined (smallest singular value {smallest:e})")]
    HamiltonianUndefined { smallest: f64 },
    #[error("time translation by {steps} steps does not preserve the positive-time half")]
    NegativeTimeStep { steps: isize },
    #[error("kernel does not decay along axis {axis} (tail ratio {ratio:e})")]
    NoDecay { axis: usize, ratio: f64 },
    #[error("image sum not converged: residual {residual:e} with {images} images")]
    Truncation { residual: f64, images: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("bound estimate failed at momentum index {index}: {reason}")]
    BoundsFailed { index: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
