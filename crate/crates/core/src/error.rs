use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (symmetrization residual {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("eigensolver did not converge")]
    ConvergenceFailure,

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("parameter point outside family domain: {0}")]
    DomainError(String),

    #[error("derivative bundle invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("bundle carries no second derivatives")]
    MissingSecondDerivatives,

    #[error("SLD set was built from a different bundle")]
    BasisMismatch,

    #[error("extrapolation diverged: {0}")]
    ExtrapolationDiverged(String),

    #[error("kernel has dimension {0}; a direction is required to split branches")]
    DegenerateKernelNeedsDirection(usize),

    #[error("point {0:?} is a declared non-C2 point of the family")]
    RefusedPathologicalPoint(Vec<f64>),

    #[error("mixing weight must lie in (0, 1), got {0}")]
    InvalidNu(f64),

    #[error("anchor state is not full rank (min eigenvalue {0:e})")]
    Rho0NotFullRank(f64),

    #[error("anchor state does not commute with the family state (commutator norm {0:e})")]
    Rho0NotCoDiagonal(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
