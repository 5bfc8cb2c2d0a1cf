//! Synthetic data from the latent recursive system and parameter-recovery
//! experiments.

pub mod dgp;
pub mod misspec;
pub mod recovery;

pub use dgp::{simulate_dataset, simulate_with_errors, ClusterSpec, CovariateGen, CovariateSpec, DgpSpec};
pub use misspec::{misspecification_study, MisspecMode, MisspecReport, MisspecRow};
pub use recovery::{recovery_experiment, ParameterSummary, RecoveryReport, Replication};
