//! Differentiable proxy voting for vector-field keypoint localization, and
//! the pose-estimation geometry around it: direction-field losses with
//! analytic gradients, RANSAC keypoint voting, EPnP, ADD/ADD-S evaluation,
//! synthetic scenes and a per-pixel field optimizer.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pnp;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod voting;

pub use error::{Error, Result};
pub use field::{Mask, SegScores, VectorField};
pub use geometry::{Direction2, Intrinsics, Point2, Point3, Pose};
