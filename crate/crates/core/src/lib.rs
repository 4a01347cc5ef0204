//! Object pose estimation from a single RGB image with a neural correspondence field.
//!
//! A fully-connected network maps a pixel-aligned image feature and the depth of a
//! 3D query point sampled in the camera frustum to the corresponding 3D point in the
//! object model frame plus its signed distance to the object surface. Query points
//! predicted to lie near the surface give 3D-3D correspondences, from which the
//! 6DoF pose is fitted with Kabsch-RANSAC.
//!
//! Modules:
//!
//! - [`geometry`]: poses, pinhole cameras, camera remapping, Kabsch and RANSAC.
//! - [`mesh`]: watertight triangle meshes, signed distance, symmetries, Marching Cubes, PLY.
//! - [`sampling`]: training and test-time query point generation.
//! - [`field`]: the field network, features, losses, RMSProp, training and correspondence extraction.
//! - [`synth`]: software rasterizer and synthetic dataset generation.
//! - [`eval`]: MSSD / MSPD / VSD pose errors, Average Recall, inlier-vs-visibility analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod image;
pub mod mesh;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Mat3, PinholeCamera, Pose, Vec3};

/// Clamping distance for signed distances (mm).
pub const DEFAULT_DELTA_MM: f64 = 5.0;
/// 3D inlier threshold for pose fitting (mm).
pub const DEFAULT_TAU_3D_MM: f64 = 20.0;
/// Fixed number of pose hypotheses per image.
pub const DEFAULT_RANSAC_ITERS: usize = 200;
/// Test-time voxel step of the query grid (mm).
pub const DEFAULT_GRID_STEP_MM: f64 = 10.0;
