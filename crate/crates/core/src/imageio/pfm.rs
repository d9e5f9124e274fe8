//! Portable float map. Written little-endian (negative scale) with rows
//! stored bottom to top; both byte orders are read.

use crate::error::{Error, Result};
use crate::image::ImagePlane;

fn bad(msg: impl Into<String>) -> Error {
    Error::Format {
        format: "pfm",
        msg: msg.into(),
    }
}

fn token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < data.len() && data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("truncated header"));
    }
    std::str::from_utf8(&data[start..*pos]).map_err(|_| bad("header is not text"))
}

pub fn decode(data: &[u8]) -> Result<ImagePlane> {
    let mut pos = 0;
    let channels = match token(data, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(bad(format!("unknown magic {m}"))),
    };
    let w: usize = token(data, &mut pos)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = token(data, &mut pos)?.parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = token(data, &mut pos)?.parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be finite and non-zero"));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let n = w * h * channels;
    let raster = data
        .get(pos..pos + 4 * n)
        .ok_or_else(|| bad(format!("expected {} raster bytes", 4 * n)))?;
    let little = scale < 0.0;
    let mut out = ImagePlane::new(w, h, channels);
    let row = w * channels;
    for (i, b) in raster.chunks_exact(4).enumerate() {
        let b = [b[0], b[1], b[2], b[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_y, k) = (i / row, i % row);
        out.data_mut()[(h - 1 - file_y) * row + k] = v;
    }
    Ok(out)
}

pub fn encode(img: &ImagePlane) -> Result<Vec<u8>> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let magic = match ch {
        3 => "PF",
        1 => "Pf",
        _ => return Err(Error::Shape(format!("pfm needs 1 or 3 channels, got {ch}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h * ch);
    let row = w * ch;
    for y in (0..h).rev() {
        for v in &img.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}
