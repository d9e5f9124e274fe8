//! JSON manifest describing a K-frame G-buffer bundle on disk.

use std::path::{Path, PathBuf};

use glam::Mat3;
use serde::{Deserialize, Serialize};

use super::{read_image, write_image, ImageFormat, PlaneEncoding};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::shading::{CameraModel, MaterialGBuffer, Projection, WORLD_TO_MAP};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorSpaces {
    pub rgb: PlaneEncoding,
    pub albedo: PlaneEncoding,
    pub orm: PlaneEncoding,
    pub normal: PlaneEncoding,
    pub alpha: PlaneEncoding,
}

impl Default for ColorSpaces {
    fn default() -> Self {
        Self {
            rgb: PlaneEncoding::Srgb,
            albedo: PlaneEncoding::Srgb,
            orm: PlaneEncoding::Linear,
            normal: PlaneEncoding::Normal,
            alpha: PlaneEncoding::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub elevation_deg: f32,
    pub azimuth_deg: f32,
    #[serde(default)]
    pub projection: Projection,
    /// Rotation of the environment about world up.
    #[serde(default)]
    pub env_yaw_deg: f32,
}

impl CameraRecord {
    pub fn to_camera(&self) -> CameraModel {
        CameraModel::orbit(self.elevation_deg, self.azimuth_deg, self.projection).with_env_yaw(self.env_yaw_deg)
    }

    pub fn from_camera(cam: &CameraModel) -> Self {
        // env_rotation = W · R_y(−yaw) · C
        let r: Mat3 = WORLD_TO_MAP.transpose() * cam.env_rotation * cam.camera_to_world().transpose();
        let theta = r.z_axis.x.atan2(r.z_axis.z);
        Self {
            elevation_deg: cam.elevation_deg,
            azimuth_deg: cam.azimuth_deg,
            projection: cam.projection,
            env_yaw_deg: -theta.to_degrees(),
        }
    }
}

/// Plane paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
    pub albedo: Option<String>,
    pub orm: Option<String>,
    pub normal: Option<String>,
    pub alpha: Option<String>,
    pub camera: CameraRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default)]
    pub color_spaces: ColorSpaces,
    pub frames: Vec<FrameRecord>,
}

impl BundleManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: BundleManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.frames.is_empty() {
            return Err(Error::Manifest("bundle has no frames".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Manifest("resolution must be positive".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            for (name, p) in [("albedo", &f.albedo), ("orm", &f.orm), ("normal", &f.normal), ("alpha", &f.alpha)] {
                if p.is_none() {
                    return Err(Error::Manifest(format!("frame {i}: missing {name} plane")));
                }
            }
        }
        Ok(())
    }
}

/// A decoded bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub root: PathBuf,
    pub frames: Vec<MaterialGBuffer>,
}

impl Bundle {
    /// Environment path recorded in the manifest, resolved against its
    /// directory.
    pub fn env_path(&self) -> Option<PathBuf> {
        self.manifest.env.as_ref().map(|e| self.root.join(e))
    }
}

fn load_plane(root: &Path, rel: &str, encoding: PlaneEncoding, channels: usize, (w, h): (usize, usize), name: &str) -> Result<ImagePlane> {
    let p = read_image(root.join(rel), encoding)?;
    if p.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "{name} plane {rel} is {}x{}, manifest declares {w}x{h}",
            p.width(),
            p.height()
        )));
    }
    match (p.channels(), channels) {
        (a, b) if a == b => Ok(p),
        (3, 1) => Ok(ImagePlane::from_fn(w, h, |x, y| [p.get(x, y, 0)])),
        (a, b) => Err(Error::Shape(format!("{name} plane {rel} has {a} channels, expected {b}"))),
    }
}

/// Reads, decodes and validates every frame of a bundle.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<Bundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = BundleManifest::read(manifest_path)?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dims = (manifest.width, manifest.height);
    let cs = manifest.color_spaces;
    let frames = manifest
        .frames
        .iter()
        .map(|f| {
            let load = |p: &Option<String>, enc, ch, name| {
                load_plane(&root, p.as_deref().expect("validated"), enc, ch, dims, name)
            };
            let g = MaterialGBuffer {
                albedo: load(&f.albedo, cs.albedo, 3, "albedo")?,
                orm: load(&f.orm, cs.orm, 3, "orm")?,
                normal: load(&f.normal, cs.normal, 3, "normal")?,
                alpha: load(&f.alpha, cs.alpha, 1, "alpha")?,
                camera: f.camera.to_camera(),
                rgb: f
                    .rgb
                    .as_deref()
                    .map(|p| load_plane(&root, p, cs.rgb, 3, dims, "rgb"))
                    .transpose()?,
            };
            g.validate()?;
            Ok(g)
        })
        .enumerate()
        .map(|(i, r): (usize, Result<MaterialGBuffer>)| r.map_err(|e| e.in_frame(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Bundle { manifest, root, frames })
}

/// Writes planes as PNG (16-bit, 8-bit for alpha) next to `manifest.json` in
/// `dir`, returning the manifest path.
pub fn save_bundle(dir: impl AsRef<Path>, frames: &[MaterialGBuffer], env: Option<&str>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot save an empty bundle".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cs = ColorSpaces::default();
    let mut records = Vec::with_capacity(frames.len());
    for (i, g) in frames.iter().enumerate() {
        g.validate().map_err(|e| e.in_frame(i))?;
        if g.albedo.dims() != first.albedo.dims() {
            return Err(Error::Shape(format!("frame {i} resolution differs from frame 0")).in_frame(i));
        }
        let write = |plane: &ImagePlane, name: &str, fmt, enc| -> Result<Option<String>> {
            let rel = format!("frame_{i:03}_{name}.png");
            write_image(dir.join(&rel), plane, fmt, enc)?;
            Ok(Some(rel))
        };
        records.push(FrameRecord {
            rgb: match &g.rgb {
                Some(p) => write(p, "rgb", ImageFormat::Png16, cs.rgb)?,
                None => None,
            },
            albedo: write(&g.albedo, "albedo", ImageFormat::Png16, cs.albedo)?,
            orm: write(&g.orm, "orm", ImageFormat::Png16, cs.orm)?,
            normal: write(&g.normal, "normal", ImageFormat::Png16, cs.normal)?,
            alpha: write(&g.alpha, "alpha", ImageFormat::Png8, cs.alpha)?,
            camera: CameraRecord::from_camera(&g.camera),
        });
    }
    let manifest = BundleManifest {
        version: MANIFEST_VERSION,
        width: first.width(),
        height: first.height(),
        env: env.map(str::to_owned),
        color_spaces: cs,
        frames: records,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
