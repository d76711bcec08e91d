//! Multilevel Sequential² Monte Carlo for Bayesian inverse problems governed
//! by a 2D elliptic PDE.
//!
//! The crate provides the building blocks (random fields, finite elements,
//! the inverse problem itself) and the samplers: single-level SMC with
//! adaptive tempering, multilevel bridging, and the adaptive multilevel
//! scheme that interleaves tempering and level updates.

pub mod error;
pub mod fem;
pub mod inverse_problem;
pub mod metrics;
pub mod model;
pub mod random_field;
pub mod scheduler;
pub mod smc;

pub use error::{Error, Result};
