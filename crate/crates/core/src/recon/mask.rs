use glam::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par::{self, Execution};
use crate::shading::MaterialGBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewMaskConfig {
    /// Spatial sigma of the bilateral normal filter, in pixels.
    pub spatial_sigma: f32,
    /// Range sigma, in units of normal difference length.
    pub range_sigma: f32,
    /// Half-width of the square filter support.
    pub radius: usize,
    pub smoothstep_lo: f32,
    pub smoothstep_hi: f32,
    pub gamma: f32,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ViewMaskConfig {
    fn default() -> Self {
        Self {
            spatial_sigma: 2.0,
            range_sigma: 0.3,
            radius: 2,
            smoothstep_lo: 0.3,
            smoothstep_hi: 0.9,
            gamma: 1.5,
            execution: Execution::default(),
        }
    }
}

impl ViewMaskConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.spatial_sigma > 0.0
            && self.range_sigma > 0.0
            && self.gamma > 0.0
            && self.smoothstep_lo >= 0.0
            && self.smoothstep_lo < self.smoothstep_hi
            && self.smoothstep_hi <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid view mask config {self:?}")))
        }
    }

    fn transfer(&self, x: f32) -> f32 {
        let t = ((x - self.smoothstep_lo) / (self.smoothstep_hi - self.smoothstep_lo)).clamp(0.0, 1.0);
        (t * t * (3.0 - 2.0 * t)).powf(self.gamma)
    }
}

fn covered(g: &MaterialGBuffer, x: usize, y: usize) -> bool {
    g.alpha.get(x, y, 0) > 0.5
}

/// Edge-preserving filter of the decoded normal field over covered pixels.
/// Uncovered pixels keep `+Z`.
pub fn bilateral_normals(g: &MaterialGBuffer, cfg: &ViewMaskConfig) -> Vec<Vec3> {
    let (w, h) = (g.width(), g.height());
    let r = cfg.radius as isize;
    let inv_s = 1.0 / (2.0 * cfg.spatial_sigma * cfg.spatial_sigma);
    let inv_r = 1.0 / (2.0 * cfg.range_sigma * cfg.range_sigma);
    par::map_indexed(w * h, cfg.execution, |i| {
        let (x, y) = (i % w, i / w);
        if !covered(g, x, y) {
            return Vec3::Z;
        }
        let n0 = g.normal_at(x, y);
        let mut acc = Vec3::ZERO;
        for dy in -r..=r {
            for dx in -r..=r {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                    continue;
                }
                let (sx, sy) = (sx as usize, sy as usize);
                if !covered(g, sx, sy) {
                    continue;
                }
                let n = g.normal_at(sx, sy);
                let d2 = (dx * dx + dy * dy) as f32;
                let wgt = (-d2 * inv_s - (n - n0).length_squared() * inv_r).exp();
                acc += n * wgt;
            }
        }
        acc.normalize_or(n0)
    })
}

/// Per-view trust masks in `[0, 1]`: `clamp(n̂·v, 0, 1)` jointly normalized
/// by its maximum over all views, then shaped by smoothstep and gamma.
/// Uncovered pixels are zero.
pub fn view_mask(frames: &[MaterialGBuffer], cfg: &ViewMaskConfig) -> Result<Vec<ImagePlane>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("view mask needs at least one frame".into()));
    }
    let mut raw = Vec::with_capacity(frames.len());
    for (i, g) in frames.iter().enumerate() {
        g.validate().map_err(|e| e.in_frame(i))?;
        let normals = bilateral_normals(g, cfg);
        let (w, h) = (g.width(), g.height());
        let mut m = ImagePlane::new(w, h, 1);
        for y in 0..h {
            for x in 0..w {
                if covered(g, x, y) {
                    let v = g.view_at(x, y);
                    m.set(x, y, 0, normals[y * w + x].dot(v).clamp(0.0, 1.0));
                }
            }
        }
        raw.push(m);
    }
    let peak = raw
        .iter()
        .flat_map(|m| m.data().iter().copied())
        .fold(0.0f32, f32::max);
    if peak <= 0.0 {
        return Err(Error::Numeric("view masks are zero everywhere".into()));
    }
    Ok(raw
        .into_iter()
        .zip(frames)
        .map(|(m, g)| {
            let (w, h) = m.dims();
            ImagePlane::from_fn(w, h, |x, y| {
                if covered(g, x, y) {
                    [cfg.transfer(m.get(x, y, 0) / peak)]
                } else {
                    [0.0]
                }
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_fixture, FixtureKind, FixtureMaterial};
    use crate::shading::Projection;

    #[test]
    fn orthographic_plane_is_fully_trusted() {
        let m = FixtureMaterial {
            projection: Projection::Orthographic,
            frames: 1,
            ..Default::default()
        };
        let frames = gen_fixture(FixtureKind::Plane, 24, &m);
        let masks = view_mask(&frames, &ViewMaskConfig::default()).unwrap();
        assert!(masks[0].data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sphere_mask_decays_radially() {
        let frames = gen_fixture(FixtureKind::Sphere, 65, &FixtureMaterial { frames: 3, ..Default::default() });
        let masks = view_mask(&frames, &ViewMaskConfig::default()).unwrap();
        let peak = masks.iter().flat_map(|m| m.data().iter().copied()).fold(0.0, f32::max);
        assert_eq!(peak, 1.0);
        let m = &masks[0];
        for x in 33..65 {
            assert!(m.get(x, 32, 0) <= m.get(x - 1, 32, 0) + 1e-6, "x = {x}");
        }
    }

    #[test]
    fn empty_and_invalid_inputs_rejected() {
        assert!(view_mask(&[], &ViewMaskConfig::default()).is_err());
        let frames = gen_fixture(FixtureKind::Sphere, 16, &FixtureMaterial { frames: 1, ..Default::default() });
        let bad = ViewMaskConfig { smoothstep_lo: 0.9, smoothstep_hi: 0.3, ..Default::default() };
        assert!(view_mask(&frames, &bad).is_err());
    }
}
