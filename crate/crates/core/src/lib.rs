//! Sequential training of small classifiers under periodic drift, Koopman
//! (EDMD) identification of the resulting weight trajectory, autonomous
//! forecasting of future weights, and coupling diagnostics.

pub mod cli;
pub mod config;
pub mod coupling;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod io;
pub mod koopman;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod svg;
pub mod trainer;

pub use error::{Error, Result};
