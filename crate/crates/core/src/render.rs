//! The display path shared by the command line and the service, so both
//! produce byte-identical PNGs for the same state.

use glam::Mat3;
use serde::{Deserialize, Serialize};

use crate::color::{tonemap, LinearRgb, ToneMapMode, ToneMapParams};
use crate::envmap::EnvironmentPyramid;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::imageio::{encode_image, ImageFormat, PlaneEncoding};
use crate::prefilter::DfgLut;
use crate::shading::{edit_material, relight, MaterialEdit, MaterialGBuffer, ShadingOptions, WORLD_TO_MAP};

/// Everything besides the bundle and environment that determines a frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewState {
    pub edit: MaterialEdit,
    /// Extra environment rotation about world up, on top of the frame's own.
    pub env_rotation_deg: f32,
    pub exposure_ev: f32,
    pub tonemap: ToneMapMode,
}

impl ViewState {
    pub fn tonemap_params(&self) -> ToneMapParams {
        ToneMapParams {
            exposure_ev: self.exposure_ev,
            mode: self.tonemap,
        }
    }
}

/// Camera-to-map rotation with the environment spun by a further
/// `yaw_deg` about world up.
pub fn rotate_env(env_rotation: Mat3, yaw_deg: f32) -> Mat3 {
    if yaw_deg == 0.0 {
        return env_rotation;
    }
    WORLD_TO_MAP * Mat3::from_rotation_y(-yaw_deg.to_radians()) * WORLD_TO_MAP.transpose() * env_rotation
}

/// Linear HDR relight of one frame under `state`.
pub fn relight_view(
    g: &MaterialGBuffer,
    state: &ViewState,
    pyramid: &EnvironmentPyramid,
    lut: &DfgLut,
    opts: &ShadingOptions,
) -> Result<ImagePlane> {
    state.edit.validate()?;
    if !state.env_rotation_deg.is_finite() || !state.exposure_ev.is_finite() {
        return Err(Error::InvalidArgument("rotation and exposure must be finite".into()));
    }
    let mut g = if state.edit.is_identity() {
        g.clone()
    } else {
        edit_material(g, &state.edit)?
    };
    g.camera.env_rotation = rotate_env(g.camera.env_rotation, state.env_rotation_deg);
    relight(&g, pyramid, lut, opts)
}

/// Display-encoded copy of a linear image.
pub fn tonemap_image(hdr: &ImagePlane, params: ToneMapParams) -> Result<ImagePlane> {
    if hdr.channels() != 3 {
        return Err(Error::Shape(format!("tonemapping needs 3 channels, got {}", hdr.channels())));
    }
    let (w, h) = hdr.dims();
    Ok(ImagePlane::from_fn(w, h, |x, y| tonemap(LinearRgb::from_slice(hdr.pixel(x, y)), params)))
}

/// Bilinear resample at pixel-center alignment.
pub fn resize(img: &ImagePlane, width: usize, height: usize) -> ImagePlane {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if (w, h) == (width, height) {
        return img.clone();
    }
    let mut out = ImagePlane::new(width, height, ch);
    let sx = w as f32 / width as f32;
    let sy = h as f32 / height as f32;
    for y in 0..height {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        let y1 = (y0 + 1).min(h - 1);
        for x in 0..width {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let x1 = (x0 + 1).min(w - 1);
            for c in 0..ch {
                let top = img.get(x0, y0, c) * (1.0 - tx) + img.get(x1, y0, c) * tx;
                let bottom = img.get(x0, y1, c) * (1.0 - tx) + img.get(x1, y1, c) * tx;
                out.set(x, y, c, top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    out
}

/// Tonemapped 8-bit PNG of a linear frame, optionally resized to `width`
/// with the aspect ratio kept.
pub fn display_png(hdr: &ImagePlane, params: ToneMapParams, width: Option<usize>) -> Result<Vec<u8>> {
    let hdr = match width {
        Some(0) => return Err(Error::InvalidArgument("width must be positive".into())),
        Some(w) if w != hdr.width() => {
            let h = ((hdr.height() * w) as f64 / hdr.width() as f64).round().max(1.0) as usize;
            resize(hdr, w, h)
        }
        _ => hdr.clone(),
    };
    encode_image(&tonemap_image(&hdr, params)?, ImageFormat::Png8, PlaneEncoding::Linear)
}

/// G-buffer planes a preview can show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviewPlane {
    Rgb,
    Albedo,
    Orm,
    Normal,
    Alpha,
}

impl std::str::FromStr for PreviewPlane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(PreviewPlane::Rgb),
            "albedo" => Ok(PreviewPlane::Albedo),
            "orm" => Ok(PreviewPlane::Orm),
            "normal" => Ok(PreviewPlane::Normal),
            "alpha" => Ok(PreviewPlane::Alpha),
            _ => Err(Error::InvalidArgument(format!("unknown plane '{s}'"))),
        }
    }
}

/// 8-bit PNG preview of a G-buffer plane in its display encoding.
pub fn preview_png(g: &MaterialGBuffer, plane: PreviewPlane) -> Result<Vec<u8>> {
    let (img, enc) = match plane {
        PreviewPlane::Rgb => (
            g.rgb
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("bundle has no rgb plane".into()))?,
            PlaneEncoding::Srgb,
        ),
        PreviewPlane::Albedo => (&g.albedo, PlaneEncoding::Srgb),
        PreviewPlane::Orm => (&g.orm, PlaneEncoding::Linear),
        PreviewPlane::Normal => (&g.normal, PlaneEncoding::Linear),
        PreviewPlane::Alpha => (&g.alpha, PlaneEncoding::Linear),
    };
    encode_image(img, ImageFormat::Png8, enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shading::{CameraModel, Projection};

    #[test]
    fn env_rotation_composes_with_frame_yaw() {
        let cam = CameraModel::orbit(10.0, 40.0, Projection::default()).with_env_yaw(15.0);
        let expected = cam.pose_env_rotation(15.0 + 30.0);
        assert!(rotate_env(cam.env_rotation, 30.0).abs_diff_eq(expected, 1e-5));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ImagePlane::filled(9, 5, 3, 0.25);
        assert_eq!(resize(&img, 9, 5), img);
        let small = resize(&img, 4, 2);
        assert!(small.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn display_png_is_deterministic() {
        let img = ImagePlane::from_fn(16, 8, |x, y| [x as f32 * 0.1, y as f32 * 0.2, 0.5]);
        let p = ToneMapParams::default();
        assert_eq!(display_png(&img, p, None).unwrap(), display_png(&img, p, None).unwrap());
        assert!(display_png(&img, p, Some(0)).is_err());
    }
}
