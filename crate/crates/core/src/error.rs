use thiserror::Error;

/// Errors produced by the analysis routines.
///
/// Every variant belongs to one module; [`Error::code`] gives the
/// module-qualified name used in CLI diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square or contains non-finite entries: {0}")]
    InvalidMatrix(String),
    #[error("eigenvalues {i} and {j} are not distinct (gap {gap:.3e} <= tolerance {tol:.3e})")]
    RepeatedEigenvalues {
        i: usize,
        j: usize,
        gap: f64,
        tol: f64,
    },
    #[error("eigendecomposition failed: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("left eigenvector {mode} has zero bilinear self-product")]
    ZeroLeftEigenvector { mode: usize },
    #[error("too many degenerate samples: {clipped} of {total} clipped for index {index}")]
    DegenerateSamples {
        index: usize,
        clipped: usize,
        total: usize,
    },
    #[error("unsupported initial-condition model: {0}")]
    UnsupportedModel(String),

    #[error("search budget exceeded: {needed} candidates, cap {cap}")]
    BudgetExceeded { needed: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear part of the field does not match the eigensystem (deviation {0:.3e})")]
    LinearPartMismatch(f64),
    #[error("small divisor {divisor:.3e} for component {component} (tolerance {tol:.3e})")]
    SmallDivisor {
        component: usize,
        divisor: f64,
        tol: f64,
    },
    #[error("fixed-point inversion did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(
        "neither nonresonance nor hyperbolicity holds; nonlinear participation not established"
    )]
    RegimeNotEstablished,

    #[error("adaptive step {step:.3e} fell below floor at t = {t}")]
    StepUnderflow { t: f64, step: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("initial condition radius {radius:.3e} exceeds the validity radius {limit:.3e} of the normalizing map")]
    RegionExceeded { radius: f64, limit: f64 },
}

impl Error {
    /// Module-qualified error code, e.g. `eigensystem::RepeatedEigenvalues`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "eigensystem::InvalidMatrix",
            Error::RepeatedEigenvalues { .. } => "eigensystem::RepeatedEigenvalues",
            Error::NumericalFailure(_) => "eigensystem::NumericalFailure",
            Error::DimensionMismatch { .. } => "eigensystem::DimensionMismatch",
            Error::ZeroLeftEigenvector { .. } => "participation::ZeroLeftEigenvector",
            Error::DegenerateSamples { .. } => "participation::DegenerateSamples",
            Error::UnsupportedModel(_) => "participation::UnsupportedModel",
            Error::BudgetExceeded { .. } => "resonance::BudgetExceeded",
            Error::InvalidArgument(_) => "input::InvalidArgument",
            Error::LinearPartMismatch(_) => "normalform::LinearPartMismatch",
            Error::SmallDivisor { .. } => "normalform::SmallDivisor",
            Error::NoConvergence { .. } => "normalform::NoConvergence",
            Error::RegimeNotEstablished => "normalform::RegimeNotEstablished",
            Error::StepUnderflow { .. } => "dynamics::StepUnderflow",
            Error::NonFinite { .. } => "dynamics::NonFinite",
            Error::RegionExceeded { .. } => "dynamics::RegionExceeded",
        }
    }

    /// Whether the error stems from malformed input rather than from the analysis itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidMatrix(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::UnsupportedModel(_)
                | Error::LinearPartMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
