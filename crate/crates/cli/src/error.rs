use thiserror::Error;
use wiener_core::ChaosError;

/// Exit codes:
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 1 | selfcheck failure or any other runtime error |
/// | 2 | unparseable input file or command line |
/// | 3 | order or support cap exceeded |
/// | 4 | invalid experiment configuration (threshold, family, order, k range) |
/// | 5 | Hurst parameter outside `(0, 1/2)` |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("cap exceeded: {0}")]
    Cap(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Hurst parameter {0} rejected: the power-variation limit theorem requires 0 < H < 1/2")]
    Hurst(f64),

    #[error("{0}")]
    Failed(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(ChaosError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Cap(_) => 3,
            CliError::Config(_) => 4,
            CliError::Hurst(_) => 5,
            CliError::Failed(_) | CliError::Io(_) | CliError::Core(_) => 1,
        }
    }

    pub fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

impl From<ChaosError> for CliError {
    fn from(e: ChaosError) -> Self {
        match e {
            ChaosError::OrderCap(_) | ChaosError::SupportCap(_) => CliError::Cap(e.to_string()),
            ChaosError::HurstOutOfRange(h) => CliError::Hurst(h),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
