//! Split-sum precomputation: the DFG lookup table, the specular environment
//! pyramid and the diffuse irradiance map.
//!
//! Specular levels are integrated with GGX importance sampling under the
//! `n = v = r` assumption. Each sample reads a source mip chosen from its
//! density (filtered importance sampling), which keeps low sample counts from
//! aliasing.


use glam::Vec3;
use serde::{Deserialize, Serialize};

use crate::brdf;
use crate::color::LinearRgb;
use crate::envmap::{level_roughness_table, EnvironmentMap, EnvironmentPyramid, PyramidMode};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par::{self, Execution};
use crate::sampling::{sample_cosine_hemisphere, sample_ggx_half_vector, Halton2D};

/// Specular sample counts per level in optimization mode.
pub const OPTIMIZATION_SAMPLES: [u32; 5] = [0, 4, 16, 24, 24];
/// Specular sample counts per level in relight mode.
pub const RELIGHT_SAMPLES: [u32; 8] = [0, 32, 64, 128, 256, 256, 256, 256];
/// Coarsest specular level resolution.
pub const MIN_LEVEL_RESOLUTION: usize = 8;
/// Default DFG table size and per-entry sample count.
pub const DFG_RESOLUTION: usize = 64;
pub const DFG_SAMPLES: u32 = 1024;
/// Irradiance samples per texel in optimization mode.
pub const OPTIMIZATION_DIFFUSE_SAMPLES: u32 = 16;
/// Irradiance samples per texel in relight mode. At 16 samples the filtered
/// lookups read very coarse mips and the irradiance is visibly biased.
pub const RELIGHT_DIFFUSE_SAMPLES: u32 = 256;

/// Split-sum BRDF integral, indexed by `(n·v, roughness)`.
///
/// Each entry holds `(scale, bias)` so that the directional albedo for a
/// normal-incidence reflectance `f0` is `f0·scale + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfgLut {
    resolution: usize,
    entries: Vec<[f32; 2]>,
}

impl DfgLut {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Entry at grid cell `(i, j)`: `n·v = (i + ½)/N`, roughness `(j + ½)/N`.
    pub fn entry(&self, i: usize, j: usize) -> [f32; 2] {
        self.entries[j * self.resolution + i]
    }

    pub fn entries(&self) -> &[[f32; 2]] {
        &self.entries
    }

    /// Bilinear lookup with edge clamping.
    pub fn lookup(&self, n_dot_v: f32, roughness: f32) -> [f32; 2] {
        let n = self.resolution;
        let fx = (n_dot_v.clamp(0.0, 1.0) * n as f32 - 0.5).clamp(0.0, (n - 1) as f32);
        let fy = (roughness.clamp(0.0, 1.0) * n as f32 - 0.5).clamp(0.0, (n - 1) as f32);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
        let (tx, ty) = (fx - x0 as f32, fy - y0 as f32);
        let lerp = |a: [f32; 2], b: [f32; 2], t: f32| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
        let top = lerp(self.entry(x0, y0), self.entry(x1, y0), tx);
        let bottom = lerp(self.entry(x0, y1), self.entry(x1, y1), tx);
        lerp(top, bottom, ty)
    }

    /// The table as a 2-channel image (x: n·v, y: roughness).
    pub fn to_image(&self) -> ImagePlane {
        let data = self.entries.iter().flat_map(|e| [e[0], e[1]]).collect();
        ImagePlane::from_vec(self.resolution, self.resolution, 2, data).expect("square table")
    }
}

/// Integrates one DFG entry with `samples` Halton-driven GGX samples.
pub fn integrate_dfg(n_dot_v: f32, roughness: f32, samples: u32) -> [f32; 2] {
    let n_dot_v = n_dot_v.max(1e-4);
    let v = Vec3::new((1.0 - n_dot_v * n_dot_v).max(0.0).sqrt(), 0.0, n_dot_v);
    let mut scale = 0.0f64;
    let mut bias = 0.0f64;
    for u in Halton2D::new(1).take(samples as usize) {
        let h = sample_ggx_half_vector(u, roughness, Vec3::Z).dir;
        let v_dot_h = v.dot(h);
        let l = h * (2.0 * v_dot_h) - v;
        let n_dot_l = l.z;
        if n_dot_l <= 0.0 || v_dot_h <= 0.0 {
            continue;
        }
        let n_dot_h = h.z.max(1e-6);
        let g = brdf::geometry_smith_ggx(n_dot_v, n_dot_l, roughness);
        let g_vis = f64::from(g * v_dot_h / (n_dot_h * n_dot_v));
        let fc = f64::from(brdf::schlick_weight(v_dot_h));
        scale += (1.0 - fc) * g_vis;
        bias += fc * g_vis;
    }
    let k = 1.0 / f64::from(samples);
    [(scale * k) as f32, (bias * k) as f32]
}

pub fn build_dfg_lut(resolution: usize, sample_count: u32) -> Result<DfgLut> {
    build_dfg_lut_with(resolution, sample_count, Execution::default())
}

pub fn build_dfg_lut_with(resolution: usize, sample_count: u32, exec: Execution) -> Result<DfgLut> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "DFG table resolution {resolution} is below 16"
        )));
    }
    if sample_count < 64 {
        return Err(Error::InvalidArgument(format!(
            "DFG sample count {sample_count} is below 64"
        )));
    }
    let n = resolution;
    let entries = par::map_indexed(n * n, exec, |idx| {
        let (i, j) = (idx % n, idx / n);
        integrate_dfg((i as f32 + 0.5) / n as f32, (j as f32 + 0.5) / n as f32, sample_count)
    });
    Ok(DfgLut {
        resolution,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefilterConfig {
    pub mode: PyramidMode,
    pub samples_per_level: Vec<u32>,
    /// Resolution of the unfiltered level 0 (octahedral, square).
    pub base_resolution: usize,
    pub diffuse_resolution: usize,
    pub diffuse_samples: u32,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl PrefilterConfig {
    pub fn optimization() -> Self {
        Self {
            mode: PyramidMode::Optimization,
            samples_per_level: OPTIMIZATION_SAMPLES.to_vec(),
            base_resolution: 128,
            diffuse_resolution: 32,
            diffuse_samples: OPTIMIZATION_DIFFUSE_SAMPLES,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn relight() -> Self {
        Self {
            mode: PyramidMode::Relight,
            samples_per_level: RELIGHT_SAMPLES.to_vec(),
            base_resolution: 256,
            diffuse_resolution: 32,
            diffuse_samples: RELIGHT_DIFFUSE_SAMPLES,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn for_mode(mode: PyramidMode) -> Self {
        match mode {
            PyramidMode::Optimization => Self::optimization(),
            PyramidMode::Relight => Self::relight(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_base_resolution(mut self, resolution: usize) -> Self {
        self.base_resolution = resolution;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn level_resolution(&self, level: usize) -> usize {
        (self.base_resolution >> level).max(MIN_LEVEL_RESOLUTION.min(self.base_resolution))
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.samples_per_level.len();
        if levels != self.mode.level_count() {
            return Err(Error::InvalidArgument(format!(
                "{:?} mode needs {} levels, got {levels}",
                self.mode,
                self.mode.level_count()
            )));
        }
        if self.samples_per_level[0] != 0 {
            return Err(Error::InvalidArgument("level 0 is a copy and takes no samples".into()));
        }
        if self.samples_per_level[1..].contains(&0) {
            return Err(Error::InvalidArgument("filtered levels need at least one sample".into()));
        }
        if self.samples_per_level.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("sample counts must not decrease".into()));
        }
        if self.base_resolution < 4 || self.diffuse_resolution < 2 || self.diffuse_samples == 0 {
            return Err(Error::InvalidArgument("resolution or sample count too small".into()));
        }
        Ok(())
    }
}

/// Box-filtered mip chain of an octahedral source, finest first.
struct SourceChain {
    mips: Vec<EnvironmentMap>,
    texel_solid_angle: Vec<f32>,
}

impl SourceChain {
    fn new(base: &EnvironmentMap) -> Self {
        let mut mips = vec![base.clone()];
        while mips.last().is_some_and(|m| m.width() > 1) {
            let next = mips.last().unwrap().downsample();
            mips.push(next);
        }
        let n = base.width();
        let texel_solid_angle = (0..n * n).map(|i| base.texel_solid_angle(i % n, i / n)).collect();
        Self { mips, texel_solid_angle }
    }

    /// Solid angle of the finest texel containing `dir`.
    fn local_texel_solid_angle(&self, dir: Vec3) -> f32 {
        let n = self.mips[0].width();
        let uv = crate::envmap::dir_to_uv(crate::envmap::EnvLayout::Octahedral, dir);
        let x = ((uv.x * n as f32) as usize).min(n - 1);
        let y = ((uv.y * n as f32) as usize).min(n - 1);
        self.texel_solid_angle[y * n + x]
    }

    /// Mip-interpolated lookup for a sample drawn with density `pdf` out of
    /// `count` samples: `lod = ½·log2(Ω_sample / Ω_texel)`, with `Ω_texel`
    /// the solid angle of the finest texel at `dir`.
    fn sample_filtered(&self, dir: Vec3, pdf: f32, count: u32) -> LinearRgb {
        let omega_sample = 1.0 / (count as f32 * pdf.max(1e-12));
        let omega_texel = self.local_texel_solid_angle(dir);
        let max_lod = (self.mips.len() - 1) as f32;
        let lod = (0.5 * (omega_sample / omega_texel).log2()).clamp(0.0, max_lod);
        let l0 = lod.floor() as usize;
        let t = lod - l0 as f32;
        let a = self.mips[l0].sample(dir);
        if t == 0.0 || l0 + 1 >= self.mips.len() {
            return a;
        }
        a.lerp(self.mips[l0 + 1].sample(dir), t)
    }
}

fn filter_map(
    resolution: usize,
    exec: Execution,
    texel: impl Fn(usize, usize, Vec3) -> LinearRgb + Sync + Send,
) -> EnvironmentMap {
    let template = EnvironmentMap::constant(
        crate::envmap::EnvLayout::Octahedral,
        resolution,
        resolution,
        LinearRgb::BLACK,
    );
    let mut pixels = ImagePlane::new(resolution, resolution, 3);
    par::for_each_row(pixels.data_mut(), resolution * 3, exec, |y, row| {
        for (x, px) in row.chunks_exact_mut(3).enumerate() {
            let c = texel(x, y, template.texel_dir(x, y));
            px.copy_from_slice(&c.to_array());
        }
    });
    EnvironmentMap::new(crate::envmap::EnvLayout::Octahedral, pixels)
        .expect("filtered radiance stays finite and non-negative")
}

fn specular_texel(src: &SourceChain, d: Vec3, roughness: f32, samples: u32, halton: Halton2D) -> LinearRgb {
    let mut acc = LinearRgb::BLACK;
    let mut weight = 0.0f32;
    for u in halton.take(samples as usize) {
        let h = sample_ggx_half_vector(u, roughness, d);
        let n_dot_h = d.dot(h.dir);
        let l = h.dir * (2.0 * n_dot_h) - d;
        let n_dot_l = d.dot(l);
        if n_dot_l <= 0.0 {
            continue;
        }
        // with n = v the reflected-direction density is D(h)/4
        let pdf_l = brdf::ndf_ggx(n_dot_h, roughness) * 0.25;
        acc += src.sample_filtered(l.normalize(), pdf_l, samples) * n_dot_l;
        weight += n_dot_l;
    }
    if weight > 0.0 {
        acc / weight
    } else {
        src.mips[0].sample(d)
    }
}

/// Builds the specular pyramid. Level 0 is the unfiltered octahedral source
/// at `cfg.base_resolution`; level `l` is filtered for roughness `l/(L−1)`.
///
/// Non-finite texels are rejected when the `EnvironmentMap` is constructed.
pub fn prefilter_specular(env: &EnvironmentMap, cfg: &PrefilterConfig) -> Result<Vec<EnvironmentMap>> {
    cfg.validate()?;
    let base = env.to_octahedral(cfg.base_resolution, cfg.execution);
    let chain = SourceChain::new(&base);
    let table = level_roughness_table(cfg.samples_per_level.len());
    let mut levels = vec![base.clone()];
    for (l, (&samples, &roughness)) in cfg.samples_per_level.iter().zip(&table).enumerate().skip(1) {
        let res = cfg.level_resolution(l);
        let map = filter_map(res, cfg.execution, |x, y, d| {
            specular_texel(&chain, d, roughness, samples, Halton2D::for_texel(x, y, l as u64, cfg.seed))
        });
        levels.push(map);
    }
    Ok(levels)
}

/// Cosine-filtered irradiance (divided by π) at `cfg.diffuse_resolution`.
pub fn prefilter_diffuse(env: &EnvironmentMap, cfg: &PrefilterConfig) -> Result<EnvironmentMap> {
    cfg.validate()?;
    let base = env.to_octahedral(cfg.base_resolution, cfg.execution);
    Ok(diffuse_from_chain(&SourceChain::new(&base), cfg))
}

fn diffuse_from_chain(chain: &SourceChain, cfg: &PrefilterConfig) -> EnvironmentMap {
    let samples = cfg.diffuse_samples;
    filter_map(cfg.diffuse_resolution, cfg.execution, |x, y, d| {
        let mut acc = LinearRgb::BLACK;
        for u in Halton2D::for_texel(x, y, u64::MAX, cfg.seed).take(samples as usize) {
            let s = sample_cosine_hemisphere(u, d);
            acc += chain.sample_filtered(s.dir, s.pdf, samples);
        }
        acc / samples as f32
    })
}

/// Full pyramid: specular levels plus the diffuse map.
pub fn build_pyramid(env: &EnvironmentMap, cfg: &PrefilterConfig) -> Result<EnvironmentPyramid> {
    let specular_levels = prefilter_specular(env, cfg)?;
    let chain = SourceChain::new(&specular_levels[0]);
    let diffuse = diffuse_from_chain(&chain, cfg);
    Ok(EnvironmentPyramid {
        level_roughness: level_roughness_table(specular_levels.len()),
        specular_levels,
        diffuse,
        samples_per_level: cfg.samples_per_level.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
    })
}

/// Energy terms of the single- and multiple-scattering specular response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiScatter {
    /// `f0·scale + bias`.
    pub fss_ess: LinearRgb,
    /// `1 − (scale + bias)`.
    pub ems: f32,
    /// Hemispherical average Fresnel, `f0 + (1 − f0)/21`.
    pub f_avg: LinearRgb,
    /// Weight of the cosine-weighted irradiance added for multiple bounces.
    pub fms_ems: LinearRgb,
}

/// Multiple-scattering compensation after Fdez-Agüera (2019).
pub fn multiscatter_terms(f0: LinearRgb, roughness: f32, n_dot_v: f32, lut: &DfgLut) -> MultiScatter {
    let [scale, bias] = lut.lookup(n_dot_v, roughness);
    let ess = (scale + bias).min(1.0);
    let ems = 1.0 - ess;
    let fss_ess = f0 * scale + LinearRgb::splat(bias);
    let f_avg = f0 + (LinearRgb::WHITE - f0) * (1.0 / 21.0);
    let fms_ems = if ems > 0.0 {
        let num = fss_ess * f_avg * ems;
        LinearRgb::new(
            num.r / (1.0 - f_avg.r * ems),
            num.g / (1.0 - f_avg.g * ems),
            num.b / (1.0 - f_avg.b * ems),
        )
    } else {
        LinearRgb::BLACK
    };
    MultiScatter {
        fss_ess,
        ems,
        f_avg,
        fms_ems,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::EnvLayout;

    fn lut() -> DfgLut {
        build_dfg_lut(32, 256).unwrap()
    }

    #[test]
    fn dfg_rejects_small_inputs() {
        assert!(build_dfg_lut(8, 256).is_err());
        assert!(build_dfg_lut(32, 16).is_err());
    }

    #[test]
    fn dfg_mirror_limit() {
        let [s, b] = integrate_dfg(1.0, 0.0, 512);
        assert!((s - 1.0).abs() < 0.01 && b.abs() < 0.01, "{s} {b}");
    }

    #[test]
    fn dfg_entries_bounded() {
        let t = build_dfg_lut(DFG_RESOLUTION, DFG_SAMPLES).unwrap();
        for e in t.entries() {
            assert!(e[0] >= 0.0 && e[1] >= 0.0);
            assert!(e[0] + e[1] <= 1.001, "{e:?}");
        }
    }

    #[test]
    fn multiscatter_identities() {
        let t = lut();
        let zero = multiscatter_terms(LinearRgb::BLACK, 0.6, 0.4, &t);
        let [_, bias] = t.lookup(0.4, 0.6);
        assert_eq!(zero.fss_ess, LinearRgb::splat(bias));

        let full = DfgLut {
            resolution: 16,
            entries: vec![[0.7, 0.3]; 256],
        };
        let m = multiscatter_terms(LinearRgb::splat(0.5), 0.5, 0.5, &full);
        assert!(m.ems.abs() < 1e-6);
        assert_eq!(m.fms_ems, LinearRgb::BLACK);

        // white metal recovers all energy
        let m = multiscatter_terms(LinearRgb::WHITE, 1.0, 0.5, &t);
        let total = m.fss_ess + m.fms_ems;
        assert!((total.r - 1.0).abs() < 1e-5, "{total:?}");
    }

    #[test]
    fn config_schedules() {
        let o = PrefilterConfig::optimization();
        assert_eq!(o.samples_per_level, vec![0, 4, 16, 24, 24]);
        o.validate().unwrap();
        let r = PrefilterConfig::relight();
        assert_eq!(r.samples_per_level.len(), 8);
        assert_eq!(*r.samples_per_level.iter().max().unwrap(), 256);
        r.validate().unwrap();
        let mut bad = PrefilterConfig::optimization();
        bad.samples_per_level[0] = 4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_environment_filters_to_itself() {
        let c = LinearRgb::new(0.3, 1.2, 2.5);
        let env = EnvironmentMap::constant(EnvLayout::Octahedral, 64, 64, c);
        let cfg = PrefilterConfig::optimization().with_base_resolution(64);
        let p = build_pyramid(&env, &cfg).unwrap();
        for level in &p.specular_levels {
            for v in level.pixels().data().chunks_exact(3) {
                let v = LinearRgb::from_slice(v);
                assert!((v - c).max_component().abs() < 1e-4 && (c - v).max_component() < 1e-4);
            }
        }
        assert_eq!(p.diffuse.width(), 32);
        for v in p.diffuse.pixels().data().chunks_exact(3) {
            let v = LinearRgb::from_slice(v);
            assert!(((v.g / c.g) - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn non_finite_sources_never_reach_the_prefilter() {
        let mut px = ImagePlane::filled(8, 8, 3, 1.0);
        px.set(2, 3, 1, f32::INFINITY);
        let err = EnvironmentMap::new(EnvLayout::Octahedral, px).unwrap_err();
        assert!(matches!(err, Error::NonFinite { x: 2, y: 3, .. }));
    }

    #[test]
    fn diffuse_of_half_lit_sphere() {
        let env = EnvironmentMap::from_fn(EnvLayout::Octahedral, 128, 128, |d| {
            LinearRgb::splat(if d.z > 0.0 { 1.0 } else { 0.0 })
        })
        .unwrap();
        let cfg = PrefilterConfig::relight().with_base_resolution(128);
        let diffuse = prefilter_diffuse(&env, &cfg).unwrap();
        assert!((diffuse.sample(Vec3::Z).r - 1.0).abs() < 0.1, "{:?}", diffuse.sample(Vec3::Z));
        for d in [Vec3::X, Vec3::Y, Vec3::NEG_X, Vec3::new(0.6, -0.8, 0.0)] {
            let v = diffuse.sample(d).r;
            assert!((v - 0.5).abs() < 0.1, "{d}: {v}");
        }
    }
}
