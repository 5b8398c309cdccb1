use thiserror::Error;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} values but {actual} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero extent")]
    ZeroExtent(Vec<usize>),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid layer {index} ({kind}): {reason}")]
    InvalidLayer {
        index: usize,
        kind: String,
        reason: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called without a matching gradient-retaining forward pass")]
    MissingTape,
    #[error("invalid label {0}: expected 0 or 1")]
    InvalidLabel(f64),
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
