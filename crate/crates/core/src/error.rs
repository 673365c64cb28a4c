use thiserror::Error;

/// Errors raised by the lab. Numeric payloads are carried as `f64` so the
/// error type does not depend on the scalar parameter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite field")]
    NonFiniteField,
    #[error("mismatched grids")]
    GridMismatch,
    #[error("singular point at r = {0}")]
    SingularPoint(f64),
    #[error("non-integrable potential: {0}")]
    NonIntegrable(&'static str),
    #[error("kernel singular at caustic (omega*t = {0})")]
    Caustic(f64),
    #[error("grid too small (edge magnitude ratio {ratio:.3e})")]
    GridTooSmall { ratio: f64 },
    #[error("unitarity lost (grid/slicing too coarse): norm = {0}")]
    UnitarityLost(f64),
    #[error("grid under-resolved (k*dx = {0:.3})")]
    UnderResolved(f64),
    #[error("evolve longer: probability {0:.3e} still inside the barrier region")]
    NotCleared(f64),
    #[error("enumeration too large (n = {0} > 20)")]
    EnumerationTooLarge(usize),
    #[error("singular kernel: coincident points")]
    SingularKernel,
    #[error("asymmetric quadrature window (imaginary residue {0:.3e})")]
    AsymmetricWindow(f64),
    #[error("no classical path found (caustic or insufficient bracket)")]
    NoClassicalPath,
    #[error("outside Born regime (R_born = {0:.3e})")]
    OutsideBornRegime(f64),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("dimension budget exceeded ({0} > 6 quadrature axes)")]
    DimensionBudget(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, PathError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PathError {
    PathError::InvalidParameter(msg.into())
}
