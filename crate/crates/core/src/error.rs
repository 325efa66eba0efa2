use thiserror::Error;

pub type Result<T> = std::result::Result<T, DpdError>;

#[derive(Debug, Error)]
pub enum DpdError {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Least-squares normal matrix is numerically singular.
    #[error("ill-conditioned least-squares problem: columns {columns:?} are linearly dependent on earlier columns")]
    Conditioning { columns: Vec<usize> },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DpdError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        DpdError::Argument(msg.into())
    }
}
