//! Core toolkit for AC power flow on distribution grids: the electrical
//! network model, admittance matrices, a Newton-Raphson reference solver,
//! the power-balance loss used for evaluation, case-file and dataset I/O,
//! and a parameterized synthetic grid generator.
//!
//! All numeric code is generic over the scalar type through [`Scalar`];
//! `f64` is the working precision everywhere that matters, `f32` exists for
//! speed experiments. Concrete aliases for the common types live at the
//! crate root.

pub mod casefile;
pub mod dataset;
pub mod error;
pub mod loss;
pub mod network;
pub mod newton;
pub mod residual;
pub mod scalar;
pub mod state;
pub mod synth;
pub mod ybus;

mod linsolve;

pub use error::{CaseError, DatasetError, GenError, LossError, NetworkError, NrError};
pub use loss::LossReport;
pub use network::{Branch, Bus, BusType, Network, Violation};
pub use newton::{LinearSolverKind, NrOptions, NrReport};
pub use scalar::Scalar;
pub use state::{GridState, KnownFlags};
pub use ybus::AdmittanceMatrix;

/// f64 network, the default working type.
pub type Network64 = Network<f64>;
/// f32 network for speed experiments.
pub type Network32 = Network<f32>;
pub type GridState64 = GridState<f64>;
pub type GridState32 = GridState<f32>;
pub type AdmittanceMatrix64 = AdmittanceMatrix<f64>;
pub type AdmittanceMatrix32 = AdmittanceMatrix<f32>;
pub type LossReport64 = LossReport<f64>;
