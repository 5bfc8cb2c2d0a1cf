//! Multivariate-normal kernels: univariate and bivariate normal CDFs, the
//! hyperspherical correlation parametrization, quasi-random draws and the
//! GHK rectangle-probability simulator.

pub mod bvn;
pub mod corr;
pub mod draws;
pub mod ghk;
pub mod normal;

pub use bvn::bvn_cdf;
pub use corr::{correlation_from_angles, CholeskyFactor, CorrelationParams};
pub use draws::{DrawMatrix, GhkConfig, SequenceKind};
pub use ghk::ghk_rectangle;
pub use normal::{std_normal_cdf, std_normal_quantile};
