//! Configuration-driven experiment harness: synthetic data, grid sweeps over
//! stepsizes and clipping bounds, median-with-interval aggregation and CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;
pub mod seeds;
pub mod stats;

pub use error::{BenchError, Result};
