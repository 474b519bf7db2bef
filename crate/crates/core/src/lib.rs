//! Gradient-based pre-release scheduling for coastal river flood control.
//!
//! The crate trains a differentiable water-level forecaster (the evaluator)
//! on simulated hourly river data, freezes it, and then trains a schedule
//! generator (the manager) by back-propagating flood/wastage hinge losses
//! through the frozen forecaster. A built-in two-branch river simulator
//! provides the data and serves as the physics oracle, and rule-based and
//! genetic-algorithm baselines anchor the comparisons.

pub mod autodiff;
pub mod assess;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
