//! Recursive two- and three-equation probit models with an endogenous binary
//! regressor and sample selection, estimated by GHK simulated maximum
//! likelihood.

// Index loops mirror the formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod effects;
pub mod error;
pub mod inference;
pub(crate) mod matrix_serde;
pub mod model;
pub mod montecarlo;
pub mod mvn;
pub mod sml;

pub use data::{serialize_result, ResultDocument};
pub use error::{Error, Result};
pub use model::{DesignMatrices, ModelSpec, ParamLayout, ParameterVector};
pub use mvn::{GhkConfig, SequenceKind};
pub use sml::{fit, fit_bivariate, EstimationResult, FitOptions};
