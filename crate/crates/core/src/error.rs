use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frequency bases differ")]
    BasisMismatch,

    #[error("basis not closed under Q: no multiplier registered for factor `{0}`")]
    BasisNotClosed(String),

    #[error("invalid frequency basis: {0}")]
    InvalidBasis(String),

    #[error("term count {count} exceeds the symbolic cap of {cap}; use numeric evaluation")]
    TermCap { count: usize, cap: usize },

    #[error("substitution matrix is not primitive: {0}")]
    NotPrimitive(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("singular linear map")]
    SingularMap,

    #[error("zero polynomial has no Mahler measure")]
    ZeroPolynomial,

    #[error("tolerance {tol:e} not reached within budget (last error estimate {reached:e})")]
    ToleranceUnattainable { tol: f64, reached: f64 },

    #[error("generators are declared rationally dependent")]
    DependentGenerators,

    #[error("overflow in cocycle product despite renormalisation")]
    Overflow,

    #[error("matrix is not Hermitian positive semi-definite: {0}")]
    NotPsd(String),

    #[error("similarity result is not a trigonometric polynomial (residual {0:e})")]
    NonPolynomial(f64),

    #[error("not a binary constant-size block rule: {0}")]
    NotBinaryBlock(String),

    #[error("range {range} too large for patch (at most {limit} allowed)")]
    RangeTooLarge { range: f64, limit: f64 },

    #[error("correlation range {have} does not cover required range {need}")]
    InsufficientRange { have: f64, need: f64 },

    #[error("unknown catalogue entry `{0}`")]
    UnknownEntry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rule file: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
