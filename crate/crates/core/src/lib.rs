//! Hyperparameter scaling laws for LLM pre-training.
//!
//! - [`predict`]: closed-form learning-rate / batch-size laws, grids, schedules.
//! - [`surface`]: grid-search loss surfaces and their analytics.
//! - [`fit`]: log-linear least squares and bootstrapped law fitting.
//! - [`stats`]: regression diagnostics and nested F-tests.
//! - [`synth`]: deterministic synthetic surfaces and observations.

pub mod error;
pub mod fit;
pub mod predict;
pub mod stats;
pub mod surface;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
