use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("tape already consumed by a backward pass")]
    TapeReused,
    #[error("checkpoint dtype mismatch: file has {found}, expected {expected}")]
    DtypeMismatch { expected: &'static str, found: String },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
