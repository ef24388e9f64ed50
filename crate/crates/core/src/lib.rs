//! Household-aware record linkage across two survey waves.
//!
//! Households are matched with a logistic model on a learned-weight Hausdorff
//! distance between their member sets. Individuals are then matched only inside
//! matched households, scored by a ridge-penalized nonnegative logistic model and
//! paired by an exact one-to-one assignment. A Fellegi-Sunter baseline, a
//! synthetic panel generator and validation harnesses are included.

pub mod assignment;
pub mod baseline;
pub mod data;
pub mod distance;
mod error;
pub mod evaluation;
pub mod household;
pub mod individual;
pub mod optim;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
