use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::PlaneEncoding;
use crate::color::{linear_to_srgb, srgb_to_linear};
use crate::error::{Error, Result};
use crate::image::ImagePlane;

fn bad(msg: impl std::fmt::Display) -> Error {
    Error::Format {
        format: "png",
        msg: msg.to_string(),
    }
}

/// Decodes 8- or 16-bit PNG data to 1 or 3 channels; alpha is dropped.
pub fn decode(data: &[u8], encoding: PlaneEncoding) -> Result<ImagePlane> {
    let img = image::load_from_memory_with_format(data, ImageFormat::Png).map_err(bad)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let wide = img.color().bytes_per_pixel() / img.color().channel_count() as u8 > 1;
    let raw: (usize, Vec<f32>) = match (gray, wide) {
        (true, false) => (1, img.to_luma8().into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect()),
        (true, true) => (1, img.to_luma16().into_raw().into_iter().map(|v| f32::from(v) / 65535.0).collect()),
        (false, false) => (3, img.to_rgb8().into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect()),
        (false, true) => (3, img.to_rgb16().into_raw().into_iter().map(|v| f32::from(v) / 65535.0).collect()),
    };
    let plane = ImagePlane::from_vec(w, h, raw.0, raw.1)?;
    Ok(encoding.decode(plane))
}

/// Encodes to PNG bytes. Values are transfer-encoded per `encoding`, then
/// clamped to `[0, 1]` and rounded to the nearest code.
pub fn encode(img: &ImagePlane, encoding: PlaneEncoding, sixteen_bit: bool) -> Result<Vec<u8>> {
    let (w, h, ch) = (img.width() as u32, img.height() as u32, img.channels());
    let f = |v: f32| match encoding {
        PlaneEncoding::Srgb => linear_to_srgb(v),
        _ => v.clamp(0.0, 1.0),
    };
    let dynamic = match (ch, sixteen_bit) {
        (1 | 3, false) => {
            let data: Vec<u8> = img.data().iter().map(|&v| (f(v) * 255.0).round() as u8).collect();
            if ch == 1 {
                DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("sized"))
            } else {
                DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, data).expect("sized"))
            }
        }
        (1 | 3, true) => {
            let data: Vec<u16> = img.data().iter().map(|&v| (f(v) * 65535.0).round() as u16).collect();
            if ch == 1 {
                DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).expect("sized"))
            } else {
                DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, data).expect("sized"))
            }
        }
        _ => return Err(Error::Shape(format!("png needs 1 or 3 channels, got {ch}"))),
    };
    let mut out = Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png).map_err(bad)?;
    Ok(out.into_inner())
}

/// sRGB decode applied to display-encoded values, used by [`PlaneEncoding`].
pub(super) fn srgb_plane(p: &ImagePlane) -> ImagePlane {
    p.map(srgb_to_linear)
}
