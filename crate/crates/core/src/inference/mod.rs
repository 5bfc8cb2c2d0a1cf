//! Scores, covariance estimators, delta-method standard errors and Wald
//! tests.

pub mod covariance;
pub mod delta;
pub mod wald;

pub use covariance::{
    clustered_sandwich, compute_covariances, invert_symmetric, numerical_hessian, numerical_score,
    robust_sandwich, CovarianceKind, CovarianceSet,
};
pub use delta::{delta_method, numerical_gradient};
pub use wald::{selection_matrix, wald_test, WaldResult};

/// Significance stars at the 0.01 / 0.05 / 0.10 levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

pub use crate::mvn::normal::two_sided_p;
