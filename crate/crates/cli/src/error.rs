use thiserror::Error;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status when the analysis itself fails.
pub const EXIT_ANALYSIS: i32 = 1;
/// Exit status for malformed input.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("{field}: expected length {expected}, got {got}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("conjugacy check failed: residual {residual:e} exceeds {tol:e}")]
    ConjugacyFailed { residual: f64, tol: f64 },
    #[error(transparent)]
    Analysis(#[from] modalpf::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "system::SchemaError",
            CliError::DimensionMismatch { .. } => "system::DimensionMismatch",
            CliError::Config(_) => "config::InvalidOption",
            CliError::Io(_) => "io::Error",
            CliError::ConjugacyFailed { .. } => "dynamics::ConjugacyFailed",
            CliError::Analysis(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(e) if !e.is_input_error() => EXIT_ANALYSIS,
            CliError::ConjugacyFailed { .. } => EXIT_ANALYSIS,
            _ => EXIT_INPUT,
        }
    }
}
