//! Unsupervised neural AC power flow solver.
//!
//! The electrical graph is rewritten into a bipartite graph whose nodes are
//! the buses and the branches; message passing alternates bus -> branch and
//! branch -> bus through small MLPs, with LSTM cells (one per bus type, one
//! for branches) carrying hidden state across iterations. Each iteration
//! decodes a full (P, Q, V, theta) candidate whose known entries are clamped
//! to the case data, and candidates are scored by the power-balance loss, so
//! training needs no solved labels and inference can rank its own attempts.

pub mod bundle;
pub mod error;
pub mod forward;
pub mod graph;
pub mod infer;
pub mod model;
pub mod noise;
pub mod train;

pub use bundle::CaseBundle;
pub use error::TrainError;
pub use graph::SolverGraph;
pub use infer::{infer_best, Inference};
pub use model::{LossMode, ModelConfig, ModelParams, NoiseSpec};
pub use noise::randomize_start;
pub use train::{fine_tune, train, EarlyStop, EpochLog, TrainOptions};

pub type ModelParams64 = ModelParams<f64>;
pub type CaseBundle64 = CaseBundle<f64>;
