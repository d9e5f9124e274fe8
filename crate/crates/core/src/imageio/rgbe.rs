//! Radiance RGBE (`.hdr`) codec. Reads flat and new-style run-length
//! scanlines; writes flat scanlines.

use crate::error::{Error, Result};
use crate::image::ImagePlane;

const FORMAT: &str = "radiance hdr";

fn bad(msg: impl Into<String>) -> Error {
    Error::Format {
        format: FORMAT,
        msg: msg.into(),
    }
}

/// Shared-exponent decode with the half-step reconstruction offset.
#[inline]
pub fn rgbe_to_float(p: [u8; 4]) -> [f32; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = (f64::from(p[3]) - 136.0).exp2();
    [
        ((f64::from(p[0]) + 0.5) * f) as f32,
        ((f64::from(p[1]) + 0.5) * f) as f32,
        ((f64::from(p[2]) + 0.5) * f) as f32,
    ]
}

#[inline]
pub fn float_to_rgbe(c: [f32; 3]) -> [u8; 4] {
    let v = f64::from(c[0].max(c[1]).max(c[2]));
    if !(v >= 1e-32) {
        return [0; 4];
    }
    // v = m·2^e with m in [0.5, 1)
    let e = v.log2().floor() as i32 + 1;
    let scale = 256.0 / f64::from(e).exp2();
    let q = |x: f32| (f64::from(x.max(0.0)) * scale).floor().min(255.0) as u8;
    [q(c[0]), q(c[1]), q(c[2]), (e + 128).clamp(0, 255) as u8]
}

fn read_line<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let start = *pos;
    let end = data[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| bad("truncated header"))?;
    *pos = end + 1;
    std::str::from_utf8(&data[start..end])
        .map(str::trim_end)
        .map_err(|_| bad("header is not text"))
}

pub fn decode(data: &[u8]) -> Result<ImagePlane> {
    let mut pos = 0;
    let magic = read_line(data, &mut pos)?;
    if !magic.starts_with("#?") {
        return Err(bad("missing #? signature"));
    }
    loop {
        let line = read_line(data, &mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(bad(format!("unsupported pixel format {fmt}")));
            }
        }
    }
    let res = read_line(data, &mut pos)?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    let (h, w) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|_| bad("bad height"))?,
            w.parse::<usize>().map_err(|_| bad("bad width"))?,
        ),
        _ => return Err(bad(format!("unsupported orientation '{res}'"))),
    };
    if w == 0 || h == 0 {
        return Err(bad("empty image"));
    }
    let mut out = ImagePlane::new(w, h, 3);
    let mut line = vec![[0u8; 4]; w];
    for y in 0..h {
        read_scanline(data, &mut pos, &mut line)?;
        for (x, p) in line.iter().enumerate() {
            out.pixel_mut(x, y).copy_from_slice(&rgbe_to_float(*p));
        }
    }
    Ok(out)
}

fn take<'a>(data: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let s = data.get(*pos..*pos + n).ok_or_else(|| bad("truncated pixel data"))?;
    *pos += n;
    Ok(s)
}

fn read_scanline(data: &[u8], pos: &mut usize, line: &mut [[u8; 4]]) -> Result<()> {
    let w = line.len();
    let head = data.get(*pos..*pos + 4).ok_or_else(|| bad("truncated pixel data"))?;
    let rle = (8..=0x7fff).contains(&w) && head[0] == 2 && head[1] == 2 && head[2] & 0x80 == 0;
    if !rle {
        for p in line.iter_mut() {
            p.copy_from_slice(take(data, pos, 4)?);
        }
        return Ok(());
    }
    if (usize::from(head[2]) << 8 | usize::from(head[3])) != w {
        return Err(bad("scanline width mismatch"));
    }
    *pos += 4;
    for c in 0..4 {
        let mut x = 0;
        while x < w {
            let n = take(data, pos, 1)?[0] as usize;
            if n > 128 {
                let run = n - 128;
                let v = take(data, pos, 1)?[0];
                if x + run > w {
                    return Err(bad("run overflows scanline"));
                }
                line[x..x + run].iter_mut().for_each(|p| p[c] = v);
                x += run;
            } else {
                if n == 0 || x + n > w {
                    return Err(bad("bad literal run"));
                }
                for (p, &v) in line[x..x + n].iter_mut().zip(take(data, pos, n)?) {
                    p[c] = v;
                }
                x += n;
            }
        }
    }
    Ok(())
}

/// Encodes a 3-channel (or 1-channel, replicated) plane.
pub fn encode(img: &ImagePlane) -> Result<Vec<u8>> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if ch != 1 && ch != 3 {
        return Err(Error::Shape(format!("radiance hdr needs 1 or 3 channels, got {ch}")));
    }
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    out.reserve(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            let c = if ch == 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
            out.extend_from_slice(&float_to_rgbe(c));
        }
    }
    Ok(out)
}
