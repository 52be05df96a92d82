use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("noise is enabled for {0} but no noise values were supplied")]
    MissingNoise(String),
    #[error("noise layout mismatch: expected {expected} values, got {got}")]
    NoiseLayout { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("environment error at step {step}: {reason}")]
    Env { step: usize, reason: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("task sets differ: {0}")]
    TaskMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
