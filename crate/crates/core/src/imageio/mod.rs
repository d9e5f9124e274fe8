//! Image files, G-buffer bundles and comparison metrics.

mod manifest;
mod metrics;
pub mod pfm;
pub mod png;
pub mod rgbe;

use std::path::Path;
use std::str::FromStr;

use glam::Vec3;
use serde::{Deserialize, Serialize};

use crate::envmap::{EnvLayout, EnvironmentMap};
use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub use manifest::{load_bundle, save_bundle, Bundle, BundleManifest, CameraRecord, ColorSpaces, FrameRecord, MANIFEST_VERSION};
pub use metrics::{psnr, psnr_masked, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Png8,
    Png16,
    RadianceHdr,
    Pfm,
}

impl ImageFormat {
    /// Guess from the file extension; PNG defaults to 16 bit.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(ImageFormat::Png16),
            "hdr" | "rgbe" | "pic" => Ok(ImageFormat::RadianceHdr),
            "pfm" => Ok(ImageFormat::Pfm),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer an image format from {}",
                path.display()
            ))),
        }
    }

    pub fn is_hdr(self) -> bool {
        matches!(self, ImageFormat::RadianceHdr | ImageFormat::Pfm)
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png8" => Ok(ImageFormat::Png8),
            "png16" => Ok(ImageFormat::Png16),
            "radiance_hdr" | "hdr" => Ok(ImageFormat::RadianceHdr),
            "pfm" => Ok(ImageFormat::Pfm),
            _ => Err(Error::InvalidArgument(format!("unknown image format '{s}'"))),
        }
    }
}

/// How the stored values of a plane relate to the in-memory values. HDR
/// formats are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneEncoding {
    Srgb,
    #[default]
    Linear,
    /// `(n + 1)/2`. Decoding renormalizes and re-encodes, so the in-memory
    /// plane keeps the encoded form with unit-length normals.
    Normal,
}

impl PlaneEncoding {
    pub(crate) fn decode(self, p: ImagePlane) -> ImagePlane {
        match self {
            PlaneEncoding::Linear => p,
            PlaneEncoding::Srgb => png::srgb_plane(&p),
            PlaneEncoding::Normal if p.channels() == 3 => {
                let (w, h) = p.dims();
                ImagePlane::from_fn(w, h, |x, y| {
                    let v = p.pixel(x, y);
                    let n = Vec3::new(2.0 * v[0] - 1.0, 2.0 * v[1] - 1.0, 2.0 * v[2] - 1.0).normalize_or(Vec3::Z);
                    [(n.x + 1.0) * 0.5, (n.y + 1.0) * 0.5, (n.z + 1.0) * 0.5]
                })
            }
            PlaneEncoding::Normal => p,
        }
    }
}

fn check_finite(img: &ImagePlane, path: &Path) -> Result<()> {
    match img.find_non_finite() {
        Some((x, y)) => Err(Error::NonFinite {
            what: path.display().to_string(),
            x,
            y,
        }),
        None => Ok(()),
    }
}

/// Decodes in-memory file contents. The container is sniffed from the
/// leading bytes.
pub fn decode_image(data: &[u8], encoding: PlaneEncoding) -> Result<ImagePlane> {
    if data.starts_with(b"\x89PNG") {
        png::decode(data, encoding)
    } else if data.starts_with(b"#?") {
        rgbe::decode(data)
    } else if data.starts_with(b"PF") || data.starts_with(b"Pf") {
        pfm::decode(data)
    } else {
        Err(Error::Format {
            format: "image",
            msg: "unrecognized file signature".into(),
        })
    }
}

pub fn encode_image(img: &ImagePlane, format: ImageFormat, encoding: PlaneEncoding) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Png8 => png::encode(img, encoding, false),
        ImageFormat::Png16 => png::encode(img, encoding, true),
        ImageFormat::RadianceHdr => rgbe::encode(img),
        ImageFormat::Pfm => pfm::encode(img),
    }
}

/// Reads any supported image. Non-finite values are rejected with their
/// pixel location.
pub fn read_image(path: impl AsRef<Path>, encoding: PlaneEncoding) -> Result<ImagePlane> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = decode_image(&data, encoding).map_err(|e| match e {
        Error::Format { format, msg } => Error::Format {
            format,
            msg: format!("{}: {msg}", path.display()),
        },
        e => e,
    })?;
    check_finite(&img, path)?;
    Ok(img)
}

pub fn write_image(path: impl AsRef<Path>, img: &ImagePlane, format: ImageFormat, encoding: PlaneEncoding) -> Result<()> {
    let path = path.as_ref();
    check_finite(img, path)?;
    let bytes = encode_image(img, format, encoding)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an environment map. Square images are octahedral, 2:1 images
/// equirectangular. PNG probes are treated as sRGB.
pub fn read_environment(path: impl AsRef<Path>) -> Result<EnvironmentMap> {
    let path = path.as_ref();
    let img = read_image(path, PlaneEncoding::Srgb)?;
    let img = match img.channels() {
        3 => img,
        1 => {
            let (w, h) = img.dims();
            ImagePlane::from_fn(w, h, |x, y| [img.get(x, y, 0); 3])
        }
        c => return Err(Error::Shape(format!("environment has {c} channels"))),
    };
    let layout = match img.dims() {
        (w, h) if w == h => EnvLayout::Octahedral,
        (w, h) if w == 2 * h => EnvLayout::Equirect,
        (w, h) => {
            return Err(Error::Shape(format!(
                "environment {w}x{h} is neither square (octahedral) nor 2:1 (equirectangular)"
            )))
        }
    };
    EnvironmentMap::new(layout, img)
}
