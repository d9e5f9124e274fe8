use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// PSNR and RMSE over the compared samples. `psnr` is infinite (serialized
/// as `null`) when the images are identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub identical: bool,
    pub rmse: f64,
    pub mse: f64,
    pub peak: f64,
    pub pixels: usize,
    pub channel_means_a: Vec<f64>,
    pub channel_means_b: Vec<f64>,
}

pub fn psnr(a: &ImagePlane, b: &ImagePlane, peak: f64) -> Result<MetricReport> {
    psnr_masked(a, b, None, peak)
}

/// Compares only pixels where `mask > 0.5`.
pub fn psnr_masked(a: &ImagePlane, b: &ImagePlane, mask: Option<&ImagePlane>, peak: f64) -> Result<MetricReport> {
    a.ensure_same_shape(b, "compared image")?;
    if let Some(m) = mask {
        if m.dims() != a.dims() || m.channels() != 1 {
            return Err(Error::Shape("metric mask must be 1-channel at image resolution".into()));
        }
    }
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::InvalidArgument(format!("psnr peak must be positive, got {peak}")));
    }
    let ch = a.channels();
    let mut sq = 0.0f64;
    let mut sum_a = vec![0.0f64; ch];
    let mut sum_b = vec![0.0f64; ch];
    let mut pixels = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask.is_some_and(|m| m.get(x, y, 0) <= 0.5) {
                continue;
            }
            pixels += 1;
            for (c, (&va, &vb)) in a.pixel(x, y).iter().zip(b.pixel(x, y)).enumerate() {
                let d = f64::from(va) - f64::from(vb);
                sq += d * d;
                sum_a[c] += f64::from(va);
                sum_b[c] += f64::from(vb);
            }
        }
    }
    if pixels == 0 {
        return Err(Error::InvalidArgument("metric mask selects no pixels".into()));
    }
    let mse = sq / (pixels * ch) as f64;
    let identical = mse == 0.0;
    let mean = |s: Vec<f64>| s.into_iter().map(|v| v / pixels as f64).collect();
    Ok(MetricReport {
        psnr: if identical { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() },
        identical,
        rmse: mse.sqrt(),
        mse,
        peak,
        pixels,
        channel_means_a: mean(sum_a),
        channel_means_b: mean(sum_b),
    })
}
