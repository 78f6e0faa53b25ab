//! Monte Carlo variance reduction for timestep-integrated gradient estimators.
//!
//! Tabulated importance proposals, stratified inverse-CDF sampling, render
//! reuse, Welford-based variance measurement, compute-matched efficiency,
//! Horvitz-Thompson pair designs and shared-draw attribution.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod cli;
pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod pairprob;
pub mod rng;
pub mod sampling;
pub mod testbed;
pub mod variance_lab;

pub use error::{Error, Result};
pub use estimators::{run_estimator, Allocation, EstimatorSpec, GradientEstimate, ProposalBook, TimestepMode};
pub use sampling::{BaseDistribution, Proposal};
pub use variance_lab::{run_until_converged, ConvergenceCriterion, VarianceReport, WelfordState};
