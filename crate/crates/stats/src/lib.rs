//! Estimation and testing on tabular data with missing outcomes.

pub mod citest;
pub mod crossfit;
pub mod dataset;
pub mod error;
pub mod hetero;
pub mod learners;
pub mod moments;
pub mod overlap;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use error::{Result, StatsError};
