//! Deferred split-sum relighting of material G-buffers.

use glam::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

use crate::brdf::{self, MaterialSample};
use crate::color::LinearRgb;
use crate::envmap::EnvironmentPyramid;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par::{self, Execution};
use crate::prefilter::{multiscatter_terms, DfgLut};

/// Default vertical field of view of the pinhole model, in degrees.
pub const DEFAULT_FOV_DEG: f32 = 33.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    Pinhole { vertical_fov_deg: f32 },
    Orthographic,
}

impl Default for Projection {
    fn default() -> Self {
        Projection::Pinhole {
            vertical_fov_deg: DEFAULT_FOV_DEG,
        }
    }
}

/// Converts world directions (`+Y` up) into the environment-map frame, whose
/// `+Z` is the map pole.
pub const WORLD_TO_MAP: Mat3 = Mat3::from_cols(
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
    Vec3::new(0.0, -1.0, 0.0),
);

/// Camera-space conventions: `+Z` points towards the viewer, `+Y` is up and
/// `+X` is right. `env_rotation` takes camera-space directions to the
/// environment-map frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub projection: Projection,
    pub elevation_deg: f32,
    pub azimuth_deg: f32,
    pub env_rotation: Mat3,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::orbit(0.0, 0.0, Projection::default())
    }
}

impl CameraModel {
    /// Camera on a unit orbit around the origin looking at it, with the
    /// environment fixed in world space.
    pub fn orbit(elevation_deg: f32, azimuth_deg: f32, projection: Projection) -> Self {
        let mut cam = Self {
            projection,
            elevation_deg,
            azimuth_deg,
            env_rotation: Mat3::IDENTITY,
        };
        cam.env_rotation = cam.pose_env_rotation(0.0);
        cam
    }

    /// Camera-to-world rotation from the orbit pose.
    pub fn camera_to_world(&self) -> Mat3 {
        let (se, ce) = self.elevation_deg.to_radians().sin_cos();
        let (sa, ca) = self.azimuth_deg.to_radians().sin_cos();
        let z = Vec3::new(ce * sa, se, ce * ca);
        let x = Vec3::new(ca, 0.0, -sa);
        let y = z.cross(x);
        Mat3::from_cols(x, y, z)
    }

    /// Camera-to-map rotation for the pose, with the environment additionally
    /// spun by `env_yaw_deg` about world up.
    pub fn pose_env_rotation(&self, env_yaw_deg: f32) -> Mat3 {
        WORLD_TO_MAP * Mat3::from_rotation_y(-env_yaw_deg.to_radians()) * self.camera_to_world()
    }

    pub fn with_env_yaw(mut self, env_yaw_deg: f32) -> Self {
        self.env_rotation = self.pose_env_rotation(env_yaw_deg);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Projection::Pinhole { vertical_fov_deg } = self.projection {
            if !(vertical_fov_deg > 1.0 && vertical_fov_deg < 120.0) {
                return Err(Error::InvalidArgument(format!(
                    "vertical field of view {vertical_fov_deg} outside (1, 120) degrees"
                )));
            }
        }
        let m = self.env_rotation;
        let err = (m.transpose() * m - Mat3::IDENTITY)
            .to_cols_array()
            .iter()
            .fold(0.0f32, |a, v| a.max(v.abs()));
        if !(err <= 1e-6) || (m.determinant() - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidArgument(format!(
                "environment rotation is not orthonormal (error {err:e})"
            )));
        }
        Ok(())
    }

    /// Unit direction from the surface seen through pixel `(x, y)` towards
    /// the camera, in camera space.
    pub fn view_dir(&self, x: usize, y: usize, width: usize, height: usize) -> Vec3 {
        match self.projection {
            Projection::Orthographic => Vec3::Z,
            Projection::Pinhole { vertical_fov_deg } => {
                let t = (0.5 * vertical_fov_deg.to_radians()).tan();
                let aspect = width as f32 / height as f32;
                let px = (2.0 * (x as f32 + 0.5) / width as f32 - 1.0) * t * aspect;
                let py = (1.0 - 2.0 * (y as f32 + 0.5) / height as f32) * t;
                Vec3::new(-px, -py, 1.0).normalize()
            }
        }
    }
}

/// One view's material planes.
///
/// `orm` follows the occlusion-roughness-metallic packing with the occlusion
/// slot unused. `normal` stores camera-space unit normals encoded as
/// `(n + 1)/2`. `albedo` is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialGBuffer {
    pub albedo: ImagePlane,
    pub orm: ImagePlane,
    pub normal: ImagePlane,
    pub alpha: ImagePlane,
    pub camera: CameraModel,
    /// Optional reference color of the view, display-encoded planes decoded to linear.
    pub rgb: Option<ImagePlane>,
}

/// Maximum deviation from unit length tolerated in decoded normals.
pub const NORMAL_LENGTH_TOLERANCE: f32 = 0.02;

impl MaterialGBuffer {
    pub fn width(&self) -> usize {
        self.albedo.width()
    }

    pub fn height(&self) -> usize {
        self.albedo.height()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.albedo.dims();
        let planes = [
            ("albedo", &self.albedo, 3),
            ("orm", &self.orm, 3),
            ("normal", &self.normal, 3),
            ("alpha", &self.alpha, 1),
        ];
        for (name, plane, channels) in planes {
            if plane.dims() != (w, h) || plane.channels() != channels {
                return Err(Error::Shape(format!(
                    "{name} plane is {}x{}x{}, expected {w}x{h}x{channels}",
                    plane.width(),
                    plane.height(),
                    plane.channels()
                )));
            }
            if let Some((x, y)) = plane.find_non_finite() {
                return Err(Error::NonFinite {
                    what: format!("{name} plane"),
                    x,
                    y,
                });
            }
        }
        if let Some(rgb) = &self.rgb {
            if rgb.dims() != (w, h) {
                return Err(Error::Shape("rgb plane resolution differs".into()));
            }
        }
        for y in 0..h {
            for x in 0..w {
                let orm = self.orm.pixel(x, y);
                if !(0.0..=1.0).contains(&orm[1]) || !(0.0..=1.0).contains(&orm[2]) {
                    return Err(Error::InvalidArgument(format!(
                        "roughness/metallic outside [0, 1] at pixel ({x}, {y})"
                    )));
                }
                if self.alpha.get(x, y, 0) > 0.5 {
                    let len = self.raw_normal(x, y).length();
                    if (len - 1.0).abs() > NORMAL_LENGTH_TOLERANCE {
                        return Err(Error::InvalidArgument(format!(
                            "normal at pixel ({x}, {y}) has length {len}"
                        )));
                    }
                }
            }
        }
        self.camera.validate()
    }

    fn raw_normal(&self, x: usize, y: usize) -> Vec3 {
        let p = self.normal.pixel(x, y);
        Vec3::new(2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0, 2.0 * p[2] - 1.0)
    }

    /// Decoded, renormalized camera-space normal.
    #[inline]
    pub fn normal_at(&self, x: usize, y: usize) -> Vec3 {
        self.raw_normal(x, y).normalize_or(Vec3::Z)
    }

    #[inline]
    pub fn material_at(&self, x: usize, y: usize) -> MaterialSample {
        let orm = self.orm.pixel(x, y);
        MaterialSample::new(LinearRgb::from_slice(self.albedo.pixel(x, y)), orm[1], orm[2])
    }

    #[inline]
    pub fn coverage(&self, x: usize, y: usize) -> f32 {
        self.alpha.get(x, y, 0).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn view_at(&self, x: usize, y: usize) -> Vec3 {
        self.camera.view_dir(x, y, self.width(), self.height())
    }
}

/// Optional per-plane overrides; `None` leaves a plane untouched.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaterialEdit {
    pub roughness_scale: Option<f32>,
    pub roughness_set: Option<f32>,
    pub metallic_set: Option<f32>,
    pub albedo_tint: Option<[f32; 3]>,
}

/// Largest accepted roughness scale or albedo tint component.
pub const MAX_EDIT_FACTOR: f32 = 16.0;

impl MaterialEdit {
    pub fn is_identity(&self) -> bool {
        *self == MaterialEdit::default()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: Option<f32>| match v {
            Some(v) if !(0.0..=1.0).contains(&v) => Err(Error::InvalidArgument(format!(
                "{name} = {v} is outside [0, 1]"
            ))),
            _ => Ok(()),
        };
        unit("roughness_set", self.roughness_set)?;
        unit("metallic_set", self.metallic_set)?;
        let factor = |name: &str, v: f32| {
            if (0.0..=MAX_EDIT_FACTOR).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {v} is outside [0, {MAX_EDIT_FACTOR}]"
                )))
            }
        };
        if let Some(s) = self.roughness_scale {
            factor("roughness_scale", s)?;
        }
        if let Some(t) = self.albedo_tint {
            for v in t {
                factor("albedo_tint", v)?;
            }
        }
        Ok(())
    }
}

/// Applies `edit` to the covered pixels of a copy of `g`.
///
/// Roughness is set first, then scaled, then clamped to
/// `[MIN_ROUGHNESS, 1]`. Tinted albedo is clamped to `[0, 1]`.
pub fn edit_material(g: &MaterialGBuffer, edit: &MaterialEdit) -> Result<MaterialGBuffer> {
    edit.validate()?;
    let mut out = g.clone();
    if edit.is_identity() {
        return Ok(out);
    }
    for y in 0..g.height() {
        for x in 0..g.width() {
            if g.alpha.get(x, y, 0) <= 0.0 {
                continue;
            }
            let orm = out.orm.pixel_mut(x, y);
            if edit.roughness_set.is_some() || edit.roughness_scale.is_some() {
                let r = edit.roughness_set.unwrap_or(orm[1]) * edit.roughness_scale.unwrap_or(1.0);
                orm[1] = r.clamp(brdf::MIN_ROUGHNESS, 1.0);
            }
            if let Some(m) = edit.metallic_set {
                orm[2] = m;
            }
            if let Some(tint) = edit.albedo_tint {
                let a = out.albedo.pixel_mut(x, y);
                for c in 0..3 {
                    a[c] = (a[c] * tint[c]).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingOptions {
    pub specular: bool,
    pub diffuse: bool,
    /// Adds the multiple-scattering energy compensation to the specular term.
    pub multiscatter: bool,
    /// Looks up the specular pyramid along the lobe's dominant direction
    /// instead of the mirror direction.
    pub dominant_direction: bool,
    /// Constant color composited behind uncovered pixels.
    pub background: LinearRgb,
    pub execution: Execution,
}

impl Default for ShadingOptions {
    fn default() -> Self {
        Self {
            specular: true,
            diffuse: true,
            multiscatter: true,
            dominant_direction: true,
            background: LinearRgb::BLACK,
            execution: Execution::default(),
        }
    }
}

/// Bends the mirror direction towards the normal as roughness grows, where
/// the peak of the GGX lobe times the cosine actually lies. Equals `r` for a
/// mirror.
#[inline]
pub fn dominant_direction(n: Vec3, r: Vec3, roughness: f32) -> Vec3 {
    let a = brdf::alpha(roughness);
    let s = (1.0 - a) * ((1.0 - a).sqrt() + a);
    n.lerp(r, s).normalize()
}

/// Split-sum radiance leaving a surface point towards the viewer.
///
/// `n` and `v` are in camera space; `to_env` rotates them into the map frame.
pub fn shade_split_sum(
    n: Vec3,
    v: Vec3,
    m: &MaterialSample,
    to_env: Mat3,
    pyramid: &EnvironmentPyramid,
    lut: &DfgLut,
    opts: &ShadingOptions,
) -> LinearRgb {
    let n_dot_v = n.dot(v).clamp(1e-4, 1.0);
    let mut reflected = n * (2.0 * n_dot_v) - v;
    if opts.dominant_direction {
        reflected = dominant_direction(n, reflected, m.roughness);
    }
    let n_env = to_env * n;
    let mut out = LinearRgb::BLACK;
    let needs_irradiance = opts.diffuse || (opts.specular && opts.multiscatter);
    let irradiance = if needs_irradiance {
        pyramid.irradiance(n_env)
    } else {
        LinearRgb::BLACK
    };
    if opts.specular {
        let ms = multiscatter_terms(m.f0(), m.roughness, n_dot_v, lut);
        let prefiltered = pyramid.sample((to_env * reflected).normalize(), m.roughness);
        out += prefiltered * ms.fss_ess;
        if opts.multiscatter {
            out += irradiance * ms.fms_ems;
        }
    }
    if opts.diffuse {
        out += irradiance * m.diffuse_albedo();
    }
    out
}

/// Relights one view. Uncovered pixels receive `opts.background`; partial
/// coverage is alpha-composited.
pub fn relight(
    g: &MaterialGBuffer,
    pyramid: &EnvironmentPyramid,
    lut: &DfgLut,
    opts: &ShadingOptions,
) -> Result<ImagePlane> {
    g.validate()?;
    if pyramid.specular_levels.is_empty() || pyramid.level_roughness.len() != pyramid.levels() {
        return Err(Error::InvalidArgument("environment pyramid has not been built".into()));
    }
    let (w, h) = (g.width(), g.height());
    let mut out = ImagePlane::new(w, h, 3);
    let to_env = g.camera.env_rotation;
    par::for_each_row(out.data_mut(), w * 3, opts.execution, |y, row| {
        for (x, px) in row.chunks_exact_mut(3).enumerate() {
            let a = g.coverage(x, y);
            let fg = if a > 0.0 {
                shade_split_sum(g.normal_at(x, y), g.view_at(x, y), &g.material_at(x, y), to_env, pyramid, lut, opts)
            } else {
                LinearRgb::BLACK
            };
            let c = fg * a + opts.background * (1.0 - a);
            px.copy_from_slice(&c.to_array());
        }
    });
    Ok(out)
}

/// Relights every frame of an orbit; errors carry the frame index.
pub fn relight_orbit(
    frames: &[MaterialGBuffer],
    pyramid: &EnvironmentPyramid,
    lut: &DfgLut,
    opts: &ShadingOptions,
) -> Result<Vec<ImagePlane>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let dims = (first.width(), first.height());
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if (f.width(), f.height()) != dims {
                return Err(Error::Shape(format!(
                    "resolution {}x{} differs from frame 0 ({}x{})",
                    f.width(),
                    f.height(),
                    dims.0,
                    dims.1
                ))
                .in_frame(i));
            }
            relight(f, pyramid, lut, opts).map_err(|e| e.in_frame(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, FixtureKind};

    #[test]
    fn orbit_rotation_is_orthonormal() {
        for (e, a) in [(0.0, 0.0), (10.0, 45.0), (-30.0, 200.0), (89.0, 17.2)] {
            let cam = CameraModel::orbit(e, a, Projection::Orthographic).with_env_yaw(33.0);
            cam.validate().unwrap();
        }
    }

    #[test]
    fn front_camera_maps_up_to_pole() {
        let cam = CameraModel::orbit(0.0, 0.0, Projection::Orthographic);
        let up = cam.env_rotation * Vec3::Y;
        assert!((up - Vec3::Z).length() < 1e-6);
    }

    #[test]
    fn view_dirs() {
        let cam = CameraModel::orbit(0.0, 0.0, Projection::default());
        let v = cam.view_dir(50, 50, 101, 101);
        assert!((v - Vec3::Z).length() < 1e-6);
        let left = cam.view_dir(0, 50, 101, 101);
        assert!(left.x > 0.0, "surface on the left sees the camera to its right");
        let ortho = CameraModel::orbit(0.0, 0.0, Projection::Orthographic);
        assert_eq!(ortho.view_dir(3, 9, 10, 10), Vec3::Z);
    }

    #[test]
    fn rejects_bad_camera() {
        let mut cam = CameraModel::orbit(0.0, 0.0, Projection::Pinhole { vertical_fov_deg: 150.0 });
        assert!(cam.validate().is_err());
        cam.projection = Projection::default();
        cam.env_rotation = Mat3::from_diagonal(Vec3::new(1.0, 1.0, 1.1));
        assert!(cam.validate().is_err());
    }

    #[test]
    fn identity_edit_is_bit_identical() {
        let g = fixtures::gen_fixture(FixtureKind::Sphere, 16, &fixtures::FixtureMaterial::default());
        let e = edit_material(&g[0], &MaterialEdit::default()).unwrap();
        assert_eq!(e, g[0]);
    }

    #[test]
    fn roughness_set_zero_hits_floor() {
        let g = &fixtures::gen_fixture(FixtureKind::Sphere, 16, &fixtures::FixtureMaterial::default())[0];
        let e = edit_material(g, &MaterialEdit { roughness_set: Some(0.0), ..Default::default() }).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let r = e.orm.get(x, y, 1);
                if g.alpha.get(x, y, 0) > 0.0 {
                    assert_eq!(r, brdf::MIN_ROUGHNESS);
                } else {
                    assert_eq!(r, g.orm.get(x, y, 1));
                }
            }
        }
    }

    #[test]
    fn edit_ranges_are_checked() {
        let g = &fixtures::gen_fixture(FixtureKind::Plane, 16, &fixtures::FixtureMaterial::default())[0];
        for bad in [
            MaterialEdit { roughness_set: Some(1.5), ..Default::default() },
            MaterialEdit { metallic_set: Some(-0.1), ..Default::default() },
            MaterialEdit { roughness_scale: Some(f32::NAN), ..Default::default() },
            MaterialEdit { albedo_tint: Some([1.0, -1.0, 1.0]), ..Default::default() },
        ] {
            assert!(edit_material(g, &bad).is_err(), "{bad:?}");
        }
        let tinted = edit_material(g, &MaterialEdit { albedo_tint: Some([4.0, 0.5, 1.0]), ..Default::default() }).unwrap();
        assert!(tinted.albedo.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
