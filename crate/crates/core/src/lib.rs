//! Instrumental variable discovery and differential causal effect
//! estimation in linear structural equation models with non-Gaussian errors.
//!
//! * [`graph`]: DAGs and graphical oracles (d-/t-separation, instrument
//!   validity, choke points, expanded graphs).
//! * [`sem`]: linear SEMs with Laplace errors, sampling and the synthetic
//!   benchmark template.
//! * [`stats`]: covariance algebra and independence tests.
//! * [`discovery`]: exhaustive pairwise instrument search.
//! * [`estimation`]: OLS/TSLS baselines, the penalized invalid-instrument
//!   estimator and its back-door protected variant, behind a named registry.
//! * [`bench`]: the benchmark harness and file formats.

pub mod bench;
pub mod discovery;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod sem;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
