use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: geometry, config values, parameter ranges.
    #[error("validation error: {0}")]
    Validation(String),

    /// Shape mismatch between matrices/vectors that must agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Non-finite values or a diverging optimization.
    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
      Numerical {
        message: String,
        iteration: Option<usize>,
    },

    /// The sample graph splits into several components.
    #[error("disconnected graph: component sizes {0:?}")]
    Disconnected(Vec<usize>),

    /// A pipeline stage was invoked before its inputs exist.
    #[error("missing prerequisite for stage `{stage}`: run `{run_first}` first")]
    MissingPrerequisite { stage: String, run_first: String },

    /// Existing artifacts were produced with a different config.
    #[error("stage `{0}` outputs exist but were built from a different config; pass --force to overwrite")]
    StaleArtifacts(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, iteration: Option<usize>) -> Self {
        Error::Numerical {
            message: msg.into(),
            iteration,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
