use thiserror::Error;

/// Errors raised by the inference machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value lies outside the parameter space or an argument is
    /// outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates a precondition (empty input, bad size, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A learner could not be fitted to the supplied data.
    #[error("fit error: {0}")]
    Fit(String),

    /// A numerical routine produced a non-finite or otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
