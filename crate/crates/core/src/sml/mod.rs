//! Simulated maximum likelihood for the recursive probit system with
//! selection.

pub mod bfgs;
pub mod fit;
pub mod kernel;
pub mod likelihood;
pub mod observation;
pub mod probit;

pub use bfgs::{BfgsOptions, IterationRecord};
pub use fit::{correlation_standard_errors, fit, fit_bivariate, fit_design, starting_values, EstimationResult, FitOptions};
pub use likelihood::LikelihoodProblem;
pub use observation::{obs_probability, Observation};
pub use probit::{fit_probit, ProbitFit};
