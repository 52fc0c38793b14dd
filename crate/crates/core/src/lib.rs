//! Differential abundance analysis for microbiome count data and a framework
//! for measuring how consistently a method's findings replicate between
//! exploratory and validation datasets.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); metric
//! fractions and thresholds are exact rationals ([`metrics::Q`]). The aliases
//! below name the usual concrete instantiations.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod methods;
pub mod metrics;
pub mod normalize;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DaaResult64 = methods::DaaResult<f64>;
pub type DaaResult32 = methods::DaaResult<f32>;
pub type DaaResultSet64 = methods::DaaResultSet<f64>;
pub type DaaResultSet32 = methods::DaaResultSet<f32>;
pub type TaxonFit64 = methods::TaxonFit<f64>;
pub type FitSummary64 = stats::FitSummary<f64>;
pub type FitSummary32 = stats::FitSummary<f32>;
pub type OlsFit64 = stats::OlsFit<f64>;
pub type Matrix64 = stats::Matrix<f64>;
pub type NormFactors64 = normalize::NormFactors<f64>;
pub type TransformedTable64 = normalize::TransformedTable<f64>;
pub type TransformedTable32 = normalize::TransformedTable<f32>;
