use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error(transparent)]
    Autodiff(#[from] gridflow_autodiff::AdError),
}
