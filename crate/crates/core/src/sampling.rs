//! Halton points and hemisphere importance sampling.

use std::f32::consts::PI;

use glam::Vec3;

use crate::brdf;
use crate::par::mix64;

/// Largest `f32` strictly below one.
const ONE_MINUS_EPSILON: f32 = 1.0 - f32::EPSILON / 2.0;

/// Radical inverse of `index` in `base`.
///
/// Digits are reversed as an integer and divided once, so the result is the
/// correctly rounded value of the exact rational.
pub fn halton(index: u64, base: u32) -> f64 {
    assert!(base >= 2, "halton base must be at least 2");
    let base = u64::from(base);
    let mut i = index;
    let mut reversed: u64 = 0;
    let mut denom: u64 = 1;
    while i > 0 {
        // stop before the denominator overflows; remaining digits are below f64 resolution
        let Some(next) = denom.checked_mul(base) else {
            break;
        };
        reversed = reversed * base + i % base;
        denom = next;
        i /= base;
    }
    reversed as f64 / denom as f64
}

/// Two-dimensional Halton sequence in bases (2, 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Halton2D {
    pub index: u64,
}

impl Halton2D {
    pub fn new(start: u64) -> Self {
        Self { index: start }
    }

    /// Sequence whose start index is offset by a hash of the texel and seed.
    pub fn for_texel(x: usize, y: usize, stream: u64, seed: u64) -> Self {
        let h = mix64(seed ^ mix64(stream ^ mix64(((y as u64) << 32) | x as u64)));
        Self::new(h & 0xF_FFFF)
    }

    pub fn point(index: u64) -> [f32; 2] {
        [
            (halton(index, 2) as f32).min(ONE_MINUS_EPSILON),
            (halton(index, 3) as f32).min(ONE_MINUS_EPSILON),
        ]
    }
}

impl Iterator for Halton2D {
    type Item = [f32; 2];

    fn next(&mut self) -> Option<[f32; 2]> {
        let p = Self::point(self.index);
        self.index += 1;
        Some(p)
    }
}

/// A sampled unit direction with its solid-angle density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDirection {
    pub dir: Vec3,
    pub pdf: f32,
}

/// Tangent and bitangent completing `n` to a right-handed frame
/// (Duff et al. 2017).
#[inline]
pub fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1.0f32.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vec3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

#[inline]
fn to_world(n: Vec3, cos_theta: f32, sin_theta: f32, phi: f32) -> Vec3 {
    let (t, b) = orthonormal_basis(n);
    let (s, c) = phi.sin_cos();
    (t * (sin_theta * c) + b * (sin_theta * s) + n * cos_theta).normalize()
}

/// GGX half-vector sampling proportional to `D(h)·(n·h)`, with `α = r²`.
///
/// `u[0]` selects the polar angle and `u[1]` the azimuth.
pub fn sample_ggx_half_vector(u: [f32; 2], roughness: f32, n: Vec3) -> SampleDirection {
    let a2 = brdf::alpha(roughness).powi(2);
    let cos2 = ((1.0 - u[0]) / (1.0 + (a2 - 1.0) * u[0])).clamp(0.0, 1.0);
    let cos_theta = cos2.sqrt();
    let sin_theta = (1.0 - cos2).max(0.0).sqrt();
    let dir = to_world(n, cos_theta, sin_theta, 2.0 * PI * u[1]);
    SampleDirection {
        dir,
        pdf: brdf::ndf_ggx(cos_theta, roughness) * cos_theta,
    }
}

/// Cosine-weighted hemisphere sampling about `n`.
pub fn sample_cosine_hemisphere(u: [f32; 2], n: Vec3) -> SampleDirection {
    let cos_theta = (1.0 - u[0]).max(0.0).sqrt();
    let sin_theta = u[0].sqrt();
    let dir = to_world(n, cos_theta, sin_theta, 2.0 * PI * u[1]);
    SampleDirection {
        dir,
        pdf: n.dot(dir).max(0.0) / PI,
    }
}

/// Uniform direction on the unit sphere.
pub fn sample_uniform_sphere(u: [f32; 2]) -> Vec3 {
    let z = 1.0 - 2.0 * u[0];
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (s, c) = (2.0 * PI * u[1]).sin_cos();
    Vec3::new(r * c, r * s, z)
}
