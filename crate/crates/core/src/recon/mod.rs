//! Reconstruction support: view-dependent trust masks and per-view
//! photometric homography correction.

mod gate;
mod homography;
mod mask;

pub use gate::{outlier_gate, GateDecision, OutlierGate};
pub use homography::{
    corner_error, fit_homography, fit_homography_masked, warp, FitOptions, FitResult, Homography,
};
pub use mask::{bilateral_normals, view_mask, ViewMaskConfig};
