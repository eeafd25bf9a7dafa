use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChaosError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("invalid multi-index {index:?}: {reason}")]
    InvalidIndex { index: Vec<u32>, reason: String },

    #[error("contraction order {l} exceeds min({n}, {m})")]
    ContractionOrder { l: usize, n: usize, m: usize },

    #[error("operation needs a kernel of order >= {required}, got {got}")]
    OrderTooLow { required: usize, got: usize },

    #[error("order {0} exceeds the cap of {cap}", cap = crate::ORDER_CAP)]
    OrderCap(usize),

    #[error("support size {0} exceeds the cap of {cap}", cap = crate::SUPPORT_CAP)]
    SupportCap(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Hurst parameter {0} must lie strictly inside (0, 1/2)")]
    HurstOutOfRange(f64),

    #[error("matrix is not positive definite (size {0})")]
    NotPositiveDefinite(usize),

    #[error("internal consistency violated: {0}")]
    Consistency(String),
}
