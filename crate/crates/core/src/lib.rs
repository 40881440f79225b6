//! Rigging and animation of implicit-surface avatars.
//!
//! A static signed distance field plus 2D facial landmarks on its front
//! render become a rig: landmarks are lifted onto the surface, grouped into
//! six facial parts, and driven by displacements transferred from a driver
//! face; head and torso move as rigid cages joined by a warped neck. Frames
//! are rendered by sphere tracing the field through the inverse of the
//! combined space deformation.
//!
//! Data-parallel loops run on rayon with the default `parallel` feature;
//! [`Execution::Sequential`] or building without the feature runs them on
//! one thread with identical results.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod exec;
pub mod geom;
pub mod landmarks;
pub mod mesh;
pub mod motion;
pub mod sdf;

pub use error::{Error, Result};
pub use exec::Execution;
pub mod fixture;
pub mod pipeline;
pub mod render;
pub mod warp;
