//! Adaptive two-stage multi-arm trials with an arm added at the interim:
//! closed testing via partial conditional error rates, concordance
//! estimation, and a Monte Carlo harness for operating characteristics.
//!
//! The numeric kernels are generic over [`scalar::Real`] (`f32` or `f64`); the aliases
//! below fix them to `f64`.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod comparators;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod worked_example;

pub use error::{Error, Result};

pub type PValue = kernel::PValue<f64>;
pub type Concordance = kernel::Concordance<f64>;
pub type ConcordanceEstimate = estimation::ConcordanceEstimate<f64>;
pub type ClosedTestReport = engine::ClosedTestReport<f64>;
pub type ConditionalErrorTable = engine::ConditionalErrorTable<f64>;
pub type RankSumTest = kernel::RankSumTest<f64>;
pub type OlsFit = kernel::OlsFit<f64>;
pub type LogScaleParams = datagen::LogScaleParams<f64>;
pub type Ar1Covariance = datagen::Ar1Covariance<f64>;

pub type PValue32 = kernel::PValue<f32>;
pub type Concordance32 = kernel::Concordance<f32>;
