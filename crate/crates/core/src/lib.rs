//! Panoramic room-layout estimation toolkit.
//!
//! Covers the geometry of equirectangular floor boundaries, uncertainty- and
//! distance-aware losses with tape-based gradients, channel-preserving
//! height compression, layout augmentation, uncertainty-guided merging of
//! two prediction stages, and the distance-binned evaluation metrics.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod error;
pub mod eval;
pub mod gradcheck_suite;
pub mod layout;
pub mod losses;
pub mod merge;
pub mod nn;
pub mod polygon;
pub mod projection;
pub mod toy_train;

pub use error::{Error, Result};
pub use layout::{BoundaryPrediction, CameraModel, Corner, Layout, LayoutFile};
pub use polygon::TopDownPolygon;
