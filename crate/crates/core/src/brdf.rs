//! Cook-Torrance specular with a GGX distribution plus a Lambertian term,
//! parametrized by basecolor, roughness and metallic.

use std::f32::consts::PI;

use glam::Vec3;

use crate::color::LinearRgb;

/// Roughness floor applied before any NDF or visibility evaluation.
pub const MIN_ROUGHNESS: f32 = 0.02;

/// Normal-incidence reflectance of non-metals.
pub const DIELECTRIC_F0: f32 = 0.04;

/// GGX width `α = r²` after clamping `r` to `[MIN_ROUGHNESS, 1]`.
#[inline]
pub fn alpha(roughness: f32) -> f32 {
    let r = roughness.clamp(MIN_ROUGHNESS, 1.0);
    r * r
}

/// `(1 − cos θ)⁵`, the Schlick grazing weight.
#[inline]
pub fn schlick_weight(cos_theta: f32) -> f32 {
    let m = (1.0 - cos_theta).clamp(0.0, 1.0);
    let m2 = m * m;
    m2 * m2 * m
}

#[inline]
pub fn fresnel_schlick(cos_theta: f32, f0: LinearRgb) -> LinearRgb {
    let w = schlick_weight(cos_theta);
    f0 + (LinearRgb::WHITE - f0) * w
}

#[inline]
pub fn ndf_ggx(n_dot_h: f32, roughness: f32) -> f32 {
    let a2 = alpha(roughness).powi(2);
    let c = n_dot_h.clamp(0.0, 1.0);
    // 1 + c²(α² − 1), arranged to stay exact at the peak
    let d = c * c * a2 + (1.0 - c) * (1.0 + c);
    a2 / (PI * d * d)
}

/// Schlick-GGX visibility term for one direction, `k = α/2`.
#[inline]
pub fn smith_g1(n_dot_x: f32, roughness: f32) -> f32 {
    let k = alpha(roughness) * 0.5;
    n_dot_x / (n_dot_x * (1.0 - k) + k)
}

/// Separable Smith shadowing-masking `G1(v)·G1(l)`.
#[inline]
pub fn geometry_smith_ggx(n_dot_v: f32, n_dot_l: f32, roughness: f32) -> f32 {
    smith_g1(n_dot_v, roughness) * smith_g1(n_dot_l, roughness)
}

/// Per-point material parameters, already clamped to valid ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub basecolor: LinearRgb,
    pub roughness: f32,
    pub metallic: f32,
}

impl MaterialSample {
    pub fn new(basecolor: LinearRgb, roughness: f32, metallic: f32) -> Self {
        Self {
            basecolor: basecolor.map(|v| v.clamp(0.0, 1.0)),
            roughness: roughness.clamp(MIN_ROUGHNESS, 1.0),
            metallic: metallic.clamp(0.0, 1.0),
        }
    }

    /// `mix(0.04, basecolor, metallic)`.
    #[inline]
    pub fn f0(&self) -> LinearRgb {
        LinearRgb::splat(DIELECTRIC_F0).lerp(self.basecolor, self.metallic)
    }

    /// Lambertian reflectance `basecolor·(1 − metallic)`.
    #[inline]
    pub fn diffuse_albedo(&self) -> LinearRgb {
        self.basecolor * (1.0 - self.metallic)
    }
}

/// Normal, incident and outgoing directions, all unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingGeometry {
    pub n: Vec3,
    pub wi: Vec3,
    pub wo: Vec3,
}

pub fn eval_specular(g: &ShadingGeometry, m: &MaterialSample) -> LinearRgb {
    let n_dot_l = g.n.dot(g.wi);
    let n_dot_v = g.n.dot(g.wo);
    if n_dot_l <= 0.0 || n_dot_v <= 0.0 {
        return LinearRgb::BLACK;
    }
    let h = (g.wi + g.wo).normalize_or_zero();
    if h == Vec3::ZERO {
        return LinearRgb::BLACK;
    }
    let d = ndf_ggx(g.n.dot(h), m.roughness);
    let f = fresnel_schlick(g.wo.dot(h).max(0.0), m.f0());
    let vis = geometry_smith_ggx(n_dot_v, n_dot_l, m.roughness);
    f * (d * vis / (4.0 * n_dot_v * n_dot_l))
}

pub fn eval_diffuse(g: &ShadingGeometry, m: &MaterialSample) -> LinearRgb {
    if g.n.dot(g.wi) <= 0.0 || g.n.dot(g.wo) <= 0.0 {
        return LinearRgb::BLACK;
    }
    m.diffuse_albedo() / PI
}

/// Full BRDF value; zero when either direction is below the surface.
pub fn eval_brdf(g: &ShadingGeometry, m: &MaterialSample) -> LinearRgb {
    eval_specular(g, m) + eval_diffuse(g, m)
}
