//! Numerical foundations: reference distributions, multiple-testing
//! adjustment, least squares and a damped Newton maximizer.

pub mod dist;
pub mod fdr;
pub mod linalg;
pub mod newton;
pub mod ols;

pub use dist::{quantile, tail_prob, two_sided_critical, Distribution};
pub use fdr::bh_adjust;
pub use linalg::{BorderedTridiagonal, Matrix};
pub use newton::{newton_maximize, Evaluation, FitSummary, Hessian, NewtonOptions, Objective};
pub use ols::{ols_fit, OlsFit};
