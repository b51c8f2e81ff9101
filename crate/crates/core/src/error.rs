use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in `{name}`")]
    NonFinite { name: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("batch size {0} is too small for train-mode batch normalization (need >= 2)")]
    BatchSize(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cannot impute `{feature}`: {reason}")]
    Imputation { feature: String, reason: String },

    #[error("constant feature `{0}` cannot be standardized")]
    ConstantFeature(String),

    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("timestamps not strictly increasing at line {line}")]
    Ordering { line: usize },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{module} failed at episode {episode}, step {step}: {source}")]
    Episode {
        module: &'static str,
        episode: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short tag naming the subsystem an error originates from, used to
    /// prefix command-line failure messages.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::BatchSize(_)
            | Error::State(_) => "nn",
            Error::Imputation { .. }
            | Error::ConstantFeature(_)
            | Error::TrainingDiverged { .. }
            | Error::InsufficientData(_) => "forecast",
            Error::Episode { module, .. } => module,
            Error::Parse { .. } | Error::Ordering { .. } | Error::Csv(_) => "data",
            Error::MissingArtifact(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) => "cli",
            Error::EmptyInput(_) | Error::Input(_) => "input",
        }
    }
}
