//! Split-sum image-space relighting.
//!
//! Material G-buffers (albedo, roughness, metallic, camera-space normals and a
//! coverage mask) are shaded under an HDR environment map using a prefiltered
//! environment pyramid and a DFG lookup table. A brute-force Monte Carlo
//! integrator of the same BRDF serves as the reference renderer.
//!
//! The crate also carries two reconstruction helpers that operate on the same
//! buffers: view-dependent trust masks and per-view homography alignment.

// negated comparisons are the NaN-rejecting form
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brdf;
pub mod color;
pub mod envmap;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod imageio;
pub mod oracle;
pub mod par;
pub mod prefilter;
pub mod recon;
pub mod render;
pub mod sampling;
pub mod shading;

pub use color::LinearRgb;
pub use envmap::{EnvLayout, EnvironmentMap, EnvironmentPyramid, PyramidMode};
pub use error::{Error, ErrorKind, Result};
pub use image::ImagePlane;
pub use par::Execution;
pub use prefilter::{DfgLut, PrefilterConfig};
pub use shading::{CameraModel, MaterialEdit, MaterialGBuffer, Projection, ShadingOptions};
