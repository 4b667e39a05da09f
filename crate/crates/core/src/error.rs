use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} at frame {frame} outside {{-1, 0..{n_classes}}}")]
    LabelOutOfRange {
        label: i64,
        frame: usize,
        n_classes: usize,
    },
    #[error("row-count mismatch: {features} feature rows but {labels} label rows")]
    RowCountMismatch { features: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("no labeled frames")]
    NoLabeledFrames,
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite loss in term `{term}` at epoch {epoch}, batch {batch}")]
    NanLoss {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("missing parameter tensor `{0}`")]
    MissingParameter(String),
    #[error("model has no {0}")]
    Unsupported(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
