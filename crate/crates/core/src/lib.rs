//! Subjectivity learning: empirical global risk minimization over
//! subject-partitioned data, with its capacity measures, coupled sample
//! schedules, generalization bounds and Monte Carlo verification harness.

pub mod bounds;
pub mod capacity;
pub mod datagen;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod risk;
pub mod schedule;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
