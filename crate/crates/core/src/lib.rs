//! Conventional and hybrid echo state networks for learning long-time
//! averages of chaotic systems, with a delayed Galerkin thermoacoustic model
//! as the data source and physical prior.

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod galerkin;
pub mod hybrid;
pub mod lyapunov;
pub mod parallel;
pub mod reservoir;
pub mod ridge;
pub mod series;
pub mod sparse;

pub use error::{Error, Result};
pub use galerkin::{DelayHistory, GalerkinModel, GalerkinState, ModelParams, Simulation};
pub use hybrid::HybridEsn;
pub use reservoir::{EsnConfig, Reservoir, TrainDiagnostics};
pub use series::TimeSeries;
