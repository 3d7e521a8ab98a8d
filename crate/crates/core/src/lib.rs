//! Multi-target tracking by detection: factored correlation-filter trackers
//! following small "tag-boxes" inside each target, tied to per-frame
//! detections by a three-round association scheme. Also ships CLEAR-MOT
//! style evaluation and a synthetic scene generator with ground truth.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod error;
pub mod exec;
pub mod association;
pub mod dcf;
pub mod detections;
pub mod features;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, TagBox};
