use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmcError {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid benchmark spec field `{field}`: {reason}")]
    Spec { field: String, reason: String },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, field `{field}`: {reason}")]
    Parse { line: usize, field: String, reason: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schedule overflow: epoch {epoch} exceeds total {total}")]
    ScheduleOverflow { epoch: usize, total: usize },

    #[error("modality error: {0}")]
    Modality(String),

    #[error("invalid box: {0}")]
    Box(String),

    #[error("selection references unknown target id {0}")]
    DanglingSelection(u64),

    #[error("conditioning vector error: {0}")]
    Conditioning(String),

    #[error("source sample {0} lacks a paired modality payload or label")]
    Pairing(u64),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PmcError {
    fn from(e: std::io::Error) -> Self {
        PmcError::Io(e.to_string())
    }
}

pub type Result<T, E = PmcError> = std::result::Result<T, E>;
