use std::path::PathBuf;

/// Crate-wide error type.
///
/// The CLI maps these onto exit codes: configuration, shape, state and
/// metric errors exit with 2; file format and I/O errors exit with 3.
#[derive(Debug, thiserror::Error)]
pub enum TcaError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("weight file error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("metric undefined: {0}")]
    Metric(String),
}

impl TcaError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            TcaError::Shape(_) | TcaError::Config(_) | TcaError::State(_) | TcaError::Metric(_) => {
                2
            }
            TcaError::Format { .. } | TcaError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, TcaError>;
