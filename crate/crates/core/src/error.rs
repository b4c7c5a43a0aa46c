use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A header or text payload could not be parsed.
    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    /// Payload length disagrees with the declared dimensions.
    #[error("size error: expected {expected} values, found {found}")]
    Size { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient samples: requested {requested}, only {available} available")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("dictionary must be thin (d <= f), got d = {d}, f = {f}")]
    ThinViolation { d: usize, f: usize },

    #[error("matrix is rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    Rank { sigma_min: f64, sigma_max: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver diverged at stage {stage}, iteration {iteration}")]
    Divergence { stage: usize, iteration: usize },

    #[error("eigenvalue iteration did not converge after {rounds} restarts (last estimates {previous:e}, {last:e})")]
    Convergence {
        rounds: usize,
        previous: f64,
        last: f64,
    },

    #[error("trivial instance: {0}")]
    TrivialInstance(String),

    #[error("mask must contain both classes: {positives} positives, {negatives} negatives")]
    DegenerateMask { positives: usize, negatives: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all {count} lambda values failed; first failure: {first}")]
    AllLambdasFailed { count: usize, first: String },
}

impl Error {
    /// Stable machine-readable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Size { .. } => "size",
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non-finite",
            Error::Degenerate(_) => "degenerate",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::ThinViolation { .. } => "thin-violation",
            Error::Rank { .. } => "rank",
            Error::Numerical(_) => "numerical",
            Error::Divergence { .. } => "divergence",
            Error::Convergence { .. } => "convergence",
            Error::TrivialInstance(_) => "trivial-instance",
            Error::DegenerateMask { .. } => "degenerate-mask",
            Error::Config(_) => "config",
            Error::AllLambdasFailed { .. } => "all-lambdas-failed",
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}
