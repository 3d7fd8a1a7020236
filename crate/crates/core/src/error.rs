use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid too small: {nx}x{ny} interior nodes, at least 3 per axis required")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("shift by {steps} steps does not fit a grid with {nx} columns")]
    ShiftOutOfRange { steps: i64, nx: usize },

    #[error("operator tagged {tag} is not Hermitian (max |M - M^H| = {defect:e})")]
    NotHermitian { tag: String, defect: f64 },

    #[error("dimension {dim} exceeds the dense limit {limit}; coarsen the grid")]
    DenseLimitExceeded { dim: usize, limit: usize },

    #[error("eigenvectors are required but the eigensystem holds eigenvalues only")]
    MissingEigenvectors,

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("eigensolver output failed verification (relative defect {defect:e}); the BLAS kernels may be faulty")]
    InaccurateEigensolver { defect: f64 },

    #[error("quadrature budget exhausted: estimate {estimate:e} with error bound {error_bound:e}")]
    QuadratureBudget { estimate: f64, error_bound: f64 },

    #[error("level set {{x + V = {level}}} is degenerate: min |grad(x + V)| = {min_grad:e} at ({x}, {y})")]
    DegenerateLevelSet { level: f64, min_grad: f64, x: f64, y: f64 },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("vector is not normalized: norm = {0}")]
    NotNormalized(f64),

    #[error("energy grid starts at {start} but must start at or below {required} to pin the shift function")]
    GridNotFarEnoughLeft { start: f64, required: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
