use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer sizes: {0}")]
    InvalidLayerSizes(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("forward cache was produced by different parameters")]
    StaleCache,

    #[error("learning rate must be finite, got {0}")]
    NonFiniteLearningRate(f64),

    #[error("parameter update produced non-finite values")]
    NonFiniteParams,

    #[error("non-finite input values")]
    NonFiniteInput,

    #[error("empty example set")]
    EmptySet,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fuzzy boundaries need at least two tasks")]
    SingleTaskStream,

    #[error("invalid stream configuration: {0}")]
    InvalidStreamConfig(String),

    #[error("requested {requested} samples from a memory holding {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("replay memory is empty")]
    EmptyMemory,

    #[error("slot {index} was replaced since it was sampled")]
    StaleSlot { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("prediction change rate requires original-example shadows")]
    ShadowsDisabled,

    #[error("empty history sample")]
    EmptyHistory,

    #[error("missing test set for task {0}")]
    MissingTestSet(usize),

    #[error("unknown config key {0:?}")]
    UnknownKey(String),

    #[error("cannot parse value {value:?} for key {key:?}")]
    ParseValue { key: String, value: String },

    #[error("malformed config line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },

    #[error("no dataset path given (use data_dir, --data-dir or GMED_DATA_DIR)")]
    MissingDatasetPath,

    #[error("empty hyperparameter grid")]
    EmptyGrid,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
