use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by validation and numeric-integrity checks across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension outside the supported range.
    #[error("invalid dimension {dim}: supported range is {min}..={max}")]
    InvalidDimension { dim: usize, min: usize, max: usize },

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A matrix that must be Hermitian is not, beyond tolerance.
    #[error("matrix is not Hermitian: max deviation {max_dev:.3e} exceeds {tol:.1e}")]
    NotHermitian { max_dev: f64, tol: f64 },

    /// A matrix that must be unitary fails the U^H U = I check.
    #[error("matrix is not unitary: max entrywise deviation {max_dev:.3e} from U^H U = I")]
    NotUnitary { max_dev: f64 },

    /// A state vector is not unit-norm within tolerance.
    #[error("state vector norm {norm} deviates from 1 beyond {tol:.1e}")]
    NotNormalized { norm: f64, tol: f64 },

    /// A density matrix trace deviates from 1 beyond tolerance.
    #[error("trace {trace} deviates from 1 beyond {tol:.1e}")]
    InvalidTrace { trace: f64, tol: f64 },

    /// A matrix that must be positive semidefinite has a negative eigenvalue.
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPositive { min_eig: f64 },

    /// An internal numeric consistency check failed (e.g. Born probabilities
    /// not summing to one).
    #[error("numeric integrity check failed: {context} (value {value:.6e})")]
    NumericIntegrity { context: String, value: f64 },

    /// A trim/corruption budget is out of range or removes every sample.
    #[error("invalid budget {budget}: {reason}")]
    InvalidBudget { budget: f64, reason: String },

    /// Catch-all for argument validation with a specific message.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was handed an empty sample batch.
    #[error("empty sample batch")]
    EmptyBatch,

    /// Moment order outside the implemented range.
    #[error("unsupported moment order {order}: supported range is 1..={max}")]
    UnsupportedOrder { order: usize, max: usize },

    /// Experiment configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// Too few measurement copies to run the requested protocol.
    #[error("insufficient copies: need at least {needed}, got {got}")]
    InsufficientCopies { needed: usize, got: usize },

    /// A combinatorial construction would exceed its size cap.
    #[error("construction size {estimated} exceeds cap {cap}")]
    SizeOverflow { estimated: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
