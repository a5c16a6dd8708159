use std::path::PathBuf;

/// Errors produced anywhere in the bootstrapping pipeline.
#[derive(Debug, thiserror::Error)]
pub enum MbwError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("no seed frames to track from")]
    NoSeeds,

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("protocol error on line {line}: {message}")]
    ProtocolError { line: usize, message: String },

    #[error("too few frames: {0}")]
    TooFewFrames(String),

    #[error("all points are missing")]
    AllMissing,

    #[error("head bone endpoints missing from groundtruth")]
    MissingHeadBone,

    #[error("bad threshold grid: {0}")]
    BadGrid(String),

    #[error("no positive examples")]
    NoPositives,

    #[error("schema error at line {line}, key `{key}`: {message}")]
    SchemaError {
        line: usize,
        key: String,
        message: String,
    },

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<MbwError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MbwError {
    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        MbwError::DegenerateConfiguration(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MbwError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        MbwError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = MbwError> = std::result::Result<T, E>;
