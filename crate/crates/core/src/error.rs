use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not compose or do not match.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A file does not follow the expected on-disk layout.
    #[error("format error: {0}")]
    Format(String),
    /// A computation produced or encountered non-finite values.
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
