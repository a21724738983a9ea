//! Error types for the core crate, one enum per concern.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("branch {branch} has zero series impedance (r = x = 0)")]
    SingularBranch { branch: usize },
    #[error("connected component {component} has no slack bus")]
    ComponentWithoutSlack { component: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown bus id {bus}")]
    UnknownBus { bus: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NrError {
    #[error("Newton-Raphson diverged after {iterations} iterations (mismatch {final_mismatch})")]
    Diverged { iterations: usize, final_mismatch: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error in {table} row {row}: {reason}")]
    Schema { table: &'static str, row: usize, reason: String },
    #[error("document has no slack bus")]
    NoSlack,
    #[error("generator references missing bus {bus}")]
    GenOnMissingBus { bus: usize },
    #[error("dimension mismatch: case has {expected} buses, state has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value cannot be serialized")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest.json missing in {dir}")]
    ManifestMissing { dir: String },
    #[error("manifest declares {expected} cases but {found} case files exist")]
    CountMismatch { expected: usize, found: usize },
    #[error("malformed manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generation stalled: acceptance below 1% over {attempts} consecutive attempts")]
    Stalled { attempts: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
