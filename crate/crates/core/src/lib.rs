//! Double machine learning for set-identified linear models.
//!
//! The identified set here is a collection of weighted averages of an
//! outcome that is only known to lie in an interval. The crate estimates
//! the set's support function with cross-fitted, Neyman-orthogonal moment
//! equations for three concrete models (partially linear predictor,
//! average partial derivative, treatment-effect bounds under sample
//! selection), and runs Bayesian-bootstrap inference over the result.
//!
//! Layout:
//! - [`dataset`]: observation tables, fold partitions, synthetic DGPs, CSV;
//! - [`learners`]: penalized first-stage learners behind one interface;
//! - [`crossfit`]: the K-fold cross-fitting engine and nuisance profiles;
//! - [`moments`]: orthogonal and plug-in moment functions, the
//!   finite-difference orthogonality probe;
//! - [`estimators`]: support-function and bound estimators;
//! - [`bootstrap`]: exponential-weight bootstrap, confidence regions;
//! - [`oracle`]: brute-force and analytic references used by tests and the
//!   infeasible estimator variant;
//! - [`sim`]: simulation and coverage harnesses behind the CLI.

pub mod bootstrap;
pub mod config;
pub mod crossfit;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod linalg;
pub mod moments;
pub mod oracle;
pub mod rng;
pub mod schema;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
