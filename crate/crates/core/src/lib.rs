//! Admission-outcome prediction and alternative-program recommendation.

pub mod calibration;
pub mod datagen;
pub mod enrichment;
pub mod error;
pub mod explain;
pub mod features;
pub mod gbdt;
pub mod hybrid;
pub mod io;
pub mod learners;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod recommender;
pub mod records;
pub mod reports;

pub use error::{Error, Result};
