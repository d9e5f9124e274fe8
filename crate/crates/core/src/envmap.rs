//! Environment-map addressing, bilinear HDR lookups and the prefiltered
//! pyramid container.
//!
//! Directions are expressed in the map frame. For the octahedral layout the
//! image center is `+Z` and the four corners are `-Z`; `u` grows with `+X` and
//! `v` grows with `+Y`. The equirectangular layout uses `+Z` as its polar axis:
//! `v = θ/π` with `θ` measured from `+Z`, and `u = φ/2π` with `φ` the azimuth
//! from `+X` towards `+Y`.

use std::f32::consts::PI;

use glam::{Vec2, Vec3};
use serde::{Deserialize, Serialize};

use crate::color::LinearRgb;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvLayout {
    Equirect,
    Octahedral,
}

pub fn dir_to_uv(layout: EnvLayout, dir: Vec3) -> Vec2 {
    match layout {
        EnvLayout::Octahedral => {
            let p = dir / (dir.x.abs() + dir.y.abs() + dir.z.abs());
            let xy = if p.z >= 0.0 {
                Vec2::new(p.x, p.y)
            } else {
                Vec2::new(
                    (1.0 - p.y.abs()) * sign_nz(p.x),
                    (1.0 - p.x.abs()) * sign_nz(p.y),
                )
            };
            xy * 0.5 + Vec2::splat(0.5)
        }
        EnvLayout::Equirect => {
            let theta = dir.z.clamp(-1.0, 1.0).acos();
            let mut phi = dir.y.atan2(dir.x);
            if phi < 0.0 {
                phi += 2.0 * PI;
            }
            Vec2::new(phi / (2.0 * PI), theta / PI)
        }
    }
}

pub fn uv_to_dir(layout: EnvLayout, uv: Vec2) -> Vec3 {
    match layout {
        EnvLayout::Octahedral => {
            let xy = uv * 2.0 - Vec2::ONE;
            let z = 1.0 - xy.x.abs() - xy.y.abs();
            let (x, y) = if z >= 0.0 {
                (xy.x, xy.y)
            } else {
                (
                    (1.0 - xy.y.abs()) * sign_nz(xy.x),
                    (1.0 - xy.x.abs()) * sign_nz(xy.y),
                )
            };
            Vec3::new(x, y, z).normalize()
        }
        EnvLayout::Equirect => {
            let phi = uv.x * 2.0 * PI;
            let theta = uv.y * PI;
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            Vec3::new(st * cp, st * sp, ct)
        }
    }
}

#[inline]
fn sign_nz(v: f32) -> f32 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Immutable HDR environment, 3-channel linear radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    layout: EnvLayout,
    pixels: ImagePlane,
}

impl EnvironmentMap {
    pub fn new(layout: EnvLayout, pixels: ImagePlane) -> Result<Self> {
        if pixels.channels() != 3 {
            return Err(Error::Shape(format!(
                "environment needs 3 channels, got {}",
                pixels.channels()
            )));
        }
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::Shape("empty environment map".into()));
        }
        if layout == EnvLayout::Octahedral && pixels.width() != pixels.height() {
            return Err(Error::Shape(format!(
                "octahedral map must be square, got {}x{}",
                pixels.width(),
                pixels.height()
            )));
        }
        if let Some((x, y)) = pixels.find_non_finite() {
            return Err(Error::NonFinite {
                what: "environment map".into(),
                x,
                y,
            });
        }
        if let Some(i) = pixels.data().iter().position(|&v| v < 0.0) {
            let p = i / 3;
            return Err(Error::InvalidArgument(format!(
                "negative radiance at pixel ({}, {})",
                p % pixels.width(),
                p / pixels.width()
            )));
        }
        Ok(Self { layout, pixels })
    }

    pub fn constant(layout: EnvLayout, width: usize, height: usize, c: LinearRgb) -> Self {
        let pixels = ImagePlane::from_fn(width, height, |_, _| c.to_array());
        Self::new(layout, pixels).expect("constant map is valid")
    }

    /// Builds a map by evaluating radiance at every texel-center direction.
    pub fn from_fn(
        layout: EnvLayout,
        width: usize,
        height: usize,
        f: impl Fn(Vec3) -> LinearRgb,
    ) -> Result<Self> {
        let pixels = ImagePlane::from_fn(width, height, |x, y| {
            let uv = Vec2::new(
                (x as f32 + 0.5) / width as f32,
                (y as f32 + 0.5) / height as f32,
            );
            f(uv_to_dir(layout, uv)).to_array()
        });
        Self::new(layout, pixels)
    }

    #[inline]
    pub fn layout(&self) -> EnvLayout {
        self.layout
    }

    #[inline]
    pub fn pixels(&self) -> &ImagePlane {
        &self.pixels
    }

    pub fn into_pixels(self) -> ImagePlane {
        self.pixels
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn texel_dir(&self, x: usize, y: usize) -> Vec3 {
        let uv = Vec2::new(
            (x as f32 + 0.5) / self.width() as f32,
            (y as f32 + 0.5) / self.height() as f32,
        );
        uv_to_dir(self.layout, uv)
    }

    /// Solid angle subtended by a texel.
    ///
    /// Exact per row for equirect maps. For the octahedral layout the
    /// Jacobian `dω = dx dy / |p|³` (with `p` on the unit octahedron) is
    /// integrated with a 4×4 midpoint rule.
    pub fn texel_solid_angle(&self, x: usize, y: usize) -> f32 {
        let (w, h) = (self.width() as f64, self.height() as f64);
        match self.layout {
            EnvLayout::Equirect => {
                let t0 = std::f64::consts::PI * y as f64 / h;
                let t1 = std::f64::consts::PI * (y + 1) as f64 / h;
                (2.0 * std::f64::consts::PI / w * (t0.cos() - t1.cos())) as f32
            }
            EnvLayout::Octahedral => {
                const SUB: usize = 4;
                let mut sum = 0.0f64;
                for j in 0..SUB {
                    for i in 0..SUB {
                        let u = (x as f64 + (i as f64 + 0.5) / SUB as f64) / w;
                        let v = (y as f64 + (j as f64 + 0.5) / SUB as f64) / h;
                        let (px, py) = (2.0 * u - 1.0, 2.0 * v - 1.0);
                        let pz = 1.0 - px.abs() - py.abs();
                        // folded triangles are isometric copies of the upper ones
                        let len2 = if pz >= 0.0 {
                            px * px + py * py + pz * pz
                        } else {
                            let fx = 1.0 - py.abs();
                            let fy = 1.0 - px.abs();
                            fx * fx + fy * fy + pz * pz
                        };
                        sum += len2.powf(-1.5);
                    }
                }
                let area = 4.0 / (w * h);
                (sum / (SUB * SUB) as f64 * area) as f32
            }
        }
    }

    #[inline]
    fn fetch(&self, x: i64, y: i64) -> LinearRgb {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let (x, y) = match self.layout {
            EnvLayout::Equirect => (x.rem_euclid(w), y.clamp(0, h - 1)),
            EnvLayout::Octahedral => fold_octahedral(x, y, w),
        };
        LinearRgb::from_slice(self.pixels.pixel(x as usize, y as usize))
    }

    /// Bilinear lookup at a texture coordinate, with layout-aware addressing.
    pub fn sample_uv(&self, uv: Vec2) -> LinearRgb {
        let fx = uv.x * self.width() as f32 - 0.5;
        let fy = uv.y * self.height() as f32 - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = self.fetch(x0, y0).lerp(self.fetch(x0 + 1, y0), tx);
        let bottom = self.fetch(x0, y0 + 1).lerp(self.fetch(x0 + 1, y0 + 1), tx);
        top.lerp(bottom, ty)
    }

    /// Radiance arriving from `dir` (map frame).
    #[inline]
    pub fn sample(&self, dir: Vec3) -> LinearRgb {
        self.sample_uv(dir_to_uv(self.layout, dir))
    }

    /// Resamples onto an octahedral grid of the given resolution. A map that
    /// is already octahedral at that resolution is returned unchanged.
    pub fn to_octahedral(&self, resolution: usize, exec: Execution) -> EnvironmentMap {
        if self.layout == EnvLayout::Octahedral && self.width() == resolution {
            return self.clone();
        }
        let mut pixels = ImagePlane::new(resolution, resolution, 3);
        let n = resolution as f32;
        par::for_each_row(pixels.data_mut(), resolution * 3, exec, |y, row| {
            for (x, px) in row.chunks_exact_mut(3).enumerate() {
                let uv = Vec2::new((x as f32 + 0.5) / n, (y as f32 + 0.5) / n);
                let c = self.sample(uv_to_dir(EnvLayout::Octahedral, uv));
                px.copy_from_slice(&c.to_array());
            }
        });
        EnvironmentMap {
            layout: EnvLayout::Octahedral,
            pixels,
        }
    }

    /// 2×2 reduction weighted by texel solid angle, so the coarse texel holds
    /// the mean radiance over the directions it covers. Both layouts keep
    /// texel boundaries aligned under halving.
    pub fn downsample(&self) -> EnvironmentMap {
        let (w, h) = ((self.width() / 2).max(1), (self.height() / 2).max(1));
        let sx = self.width() / w;
        let sy = self.height() / h;
        let pixels = ImagePlane::from_fn(w, h, |x, y| {
            let mut acc = [0.0f64; 3];
            let mut total = 0.0f64;
            for j in 0..sy {
                for i in 0..sx {
                    let (fx, fy) = (x * sx + i, y * sy + j);
                    let wgt = f64::from(self.texel_solid_angle(fx, fy));
                    let p = self.pixels.pixel(fx, fy);
                    for c in 0..3 {
                        acc[c] += wgt * f64::from(p[c]);
                    }
                    total += wgt;
                }
            }
            acc.map(|v| (v / total) as f32)
        });
        EnvironmentMap {
            layout: self.layout,
            pixels,
        }
    }

    /// Returns a copy with every texel multiplied by `k ≥ 0`.
    pub fn scaled(&self, k: f32) -> EnvironmentMap {
        EnvironmentMap {
            layout: self.layout,
            pixels: self.pixels.scaled(k.max(0.0)),
        }
    }

    /// Solid-angle-weighted mean radiance.
    pub fn mean_radiance(&self) -> LinearRgb {
        let mut acc = [0.0f64; 3];
        let mut total = 0.0f64;
        for y in 0..self.height() {
            for x in 0..self.width() {
                let w = f64::from(self.texel_solid_angle(x, y));
                let p = self.pixels.pixel(x, y);
                for c in 0..3 {
                    acc[c] += f64::from(p[c]) * w;
                }
                total += w;
            }
        }
        LinearRgb::new(
            (acc[0] / total) as f32,
            (acc[1] / total) as f32,
            (acc[2] / total) as f32,
        )
    }
}

/// Maps a texel index one step outside an `n × n` octahedral grid onto the
/// texel that covers the same directions: crossing an edge mirrors the other
/// coordinate.
#[inline]
fn fold_octahedral(mut x: i64, mut y: i64, n: i64) -> (i64, i64) {
    if x < 0 {
        x = -1 - x;
        y = n - 1 - y;
    } else if x >= n {
        x = 2 * n - 1 - x;
        y = n - 1 - y;
    }
    if y < 0 {
        y = -1 - y;
        x = n - 1 - x;
    } else if y >= n {
        y = 2 * n - 1 - y;
        x = n - 1 - x;
    }
    (x.clamp(0, n - 1), y.clamp(0, n - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PyramidMode {
    /// Five levels, cheap enough to rebuild every optimization step.
    Optimization,
    /// Eight levels for final relighting.
    Relight,
}

impl PyramidMode {
    pub fn level_count(self) -> usize {
        match self {
            PyramidMode::Optimization => 5,
            PyramidMode::Relight => 8,
        }
    }
}

/// Prefiltered specular mip chain plus a diffuse irradiance map.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentPyramid {
    pub specular_levels: Vec<EnvironmentMap>,
    pub diffuse: EnvironmentMap,
    pub level_roughness: Vec<f32>,
    pub samples_per_level: Vec<u32>,
    pub mode: PyramidMode,
    pub seed: u64,
}

/// Linear roughness table `l / (L − 1)`.
pub fn level_roughness_table(levels: usize) -> Vec<f32> {
    match levels {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|l| l as f32 / (n - 1) as f32).collect(),
    }
}

impl EnvironmentPyramid {
    pub fn levels(&self) -> usize {
        self.specular_levels.len()
    }

    /// Trilinear lookup: bilinear in the two levels bracketing `roughness`,
    /// linear across them.
    pub fn sample(&self, dir: Vec3, roughness: f32) -> LinearRgb {
        let table = &self.level_roughness;
        let last = table.len() - 1;
        let r = roughness.clamp(table[0], table[last]);
        let hi = table.partition_point(|&lr| lr < r).min(last);
        if table[hi] == r || hi == 0 {
            return self.specular_levels[hi].sample(dir);
        }
        let lo = hi - 1;
        let t = (r - table[lo]) / (table[hi] - table[lo]);
        let a = self.specular_levels[lo].sample(dir);
        let b = self.specular_levels[hi].sample(dir);
        a.lerp(b, t)
    }

    /// Cosine-weighted irradiance divided by π, from the diffuse map.
    #[inline]
    pub fn irradiance(&self, n: Vec3) -> LinearRgb {
        self.diffuse.sample(n)
    }
}
