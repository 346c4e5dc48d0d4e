//! Semi-supervised teacher-student training for implicit signed distance
//! fields on a synthetic single-view task.
//!
//! The pipeline warms up a teacher on a small labeled subset, then trains a
//! student on labeled and pseudo-labeled data while the teacher follows the
//! student through an importance-regularized, meta-adaptive EMA.

pub mod checkpoint;
pub mod data;
pub mod ema;
pub mod error;
pub mod geometry;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod pseudo;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::Point2;
