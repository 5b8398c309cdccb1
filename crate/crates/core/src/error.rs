use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] fcd_tensor::TensorError),

    #[error("malformed CIFAR file {path}: {reason}")]
    MalformedCifar { path: String, reason: String },

    #[error("missing file {0}")]
    MissingFile(String),

    #[error("class {class} has {available} images, {requested} requested")]
    NotEnoughImages { class: usize, available: usize, requested: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("victim gate not met: held-out accuracy {accuracy:.4} < {gate:.2}")]
    GateNotMet { accuracy: f64, gate: f64 },

    #[error("victim is untrained")]
    Untrained,

    #[error("no image survived the confidence filter")]
    EmptySurvivors,

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("unbalanced training set: {positives} adversarial vs {negatives} benign")]
    Unbalanced { positives: usize, negatives: usize },

    #[error("feature order mismatch: expected {expected:?}, got {actual:?}")]
    FeatureOrder { expected: Vec<String>, actual: Vec<String> },

    #[error("duplicate feature {0}")]
    DuplicateFeature(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Metric(String),

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
