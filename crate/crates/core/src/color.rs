//! Linear RGB radiance, sRGB transfer functions and display tonemapping.

use std::ops::{Add, AddAssign, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Linear Rec.709 radiance or reflectance triple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearRgb {
    pub r: f32,
    pub g: f32,
    pub b: f32,
}

impl LinearRgb {
    pub const BLACK: LinearRgb = LinearRgb::splat(0.0);
    pub const WHITE: LinearRgb = LinearRgb::splat(1.0);

    #[inline]
    pub const fn new(r: f32, g: f32, b: f32) -> Self {
        Self { r, g, b }
    }

    #[inline]
    pub const fn splat(v: f32) -> Self {
        Self { r: v, g: v, b: v }
    }

    #[inline]
    pub fn from_slice(p: &[f32]) -> Self {
        Self::new(p[0], p[1], p[2])
    }

    #[inline]
    pub fn to_array(self) -> [f32; 3] {
        [self.r, self.g, self.b]
    }

    #[inline]
    pub fn lerp(self, other: Self, t: f32) -> Self {
        self + (other - self) * t
    }

    #[inline]
    pub fn map(self, f: impl Fn(f32) -> f32) -> Self {
        Self::new(f(self.r), f(self.g), f(self.b))
    }

    pub fn max_component(self) -> f32 {
        self.r.max(self.g).max(self.b)
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    pub fn luminance(self) -> f32 {
        0.2126 * self.r + 0.7152 * self.g + 0.0722 * self.b
    }
}

impl Add for LinearRgb {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl AddAssign for LinearRgb {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for LinearRgb {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

impl Mul for LinearRgb {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.r * o.r, self.g * o.g, self.b * o.b)
    }
}

impl Mul<f32> for LinearRgb {
    type Output = Self;
    #[inline]
    fn mul(self, k: f32) -> Self {
        Self::new(self.r * k, self.g * k, self.b * k)
    }
}

impl Div<f32> for LinearRgb {
    type Output = Self;
    #[inline]
    fn div(self, k: f32) -> Self {
        Self::new(self.r / k, self.g / k, self.b / k)
    }
}

/// IEC 61966-2-1 decoding. Inputs outside `[0, 1]` are clamped.
pub fn srgb_to_linear(v: f32) -> f32 {
    let v = f64::from(v.clamp(0.0, 1.0));
    let out = if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    };
    out as f32
}

/// IEC 61966-2-1 encoding. Values above 1 clamp to 1.
pub fn linear_to_srgb(v: f32) -> f32 {
    let v = f64::from(v.clamp(0.0, 1.0));
    let out = if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    out as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneMapMode {
    #[default]
    Agx,
    LinearClamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ToneMapParams {
    pub exposure_ev: f32,
    pub mode: ToneMapMode,
}

// AgX base transform, minimal polynomial fit (Wrensch 2023, MIT), derived from
// the reference OCIO configuration. Matrices are row-major here.
#[allow(clippy::excessive_precision)]
const AGX_INSET: [[f32; 3]; 3] = [
    [0.842479062253094, 0.0784335999999992, 0.0792237451477643],
    [0.0423282422610123, 0.878468636469772, 0.0791661274605434],
    [0.0423756549057051, 0.0784336, 0.879142973793104],
];
#[allow(clippy::excessive_precision)]
const AGX_OUTSET: [[f32; 3]; 3] = [
    [1.19687900512017, -0.0980208811401368, -0.0990297440797205],
    [-0.0528968517574562, 1.15190312990417, -0.0989611768448433],
    [-0.0529716355144438, -0.0980434501171241, 1.15107367264116],
];
const AGX_MIN_EV: f32 = -12.47393;
const AGX_MAX_EV: f32 = 4.026069;

fn mat3_mul(m: &[[f32; 3]; 3], v: [f32; 3]) -> [f32; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

// Sigmoid in log space; output is display-encoded.
fn agx_contrast(x: f32) -> f32 {
    let x2 = x * x;
    let x4 = x2 * x2;
    15.5 * x4 * x2 - 40.14 * x4 * x + 31.96 * x4 - 6.868 * x2 * x + 0.4298 * x2 + 0.1191 * x
        - 0.00232
}

/// Maps linear HDR radiance to a display-encoded triple in `[0, 1]`.
///
/// Exposure is applied as `c · 2^exposure_ev` before the curve.
pub fn tonemap(c: LinearRgb, p: ToneMapParams) -> [f32; 3] {
    let scale = p.exposure_ev.exp2();
    let c = (c * scale).map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
    match p.mode {
        ToneMapMode::Agx => tonemap_agx(c),
        ToneMapMode::LinearClamp => [
            linear_to_srgb(c.r),
            linear_to_srgb(c.g),
            linear_to_srgb(c.b),
        ],
    }
}

fn tonemap_agx(c: LinearRgb) -> [f32; 3] {
    let v = mat3_mul(&AGX_INSET, c.to_array()).map(|v| {
        let ev = if v > 0.0 { v.log2() } else { AGX_MIN_EV };
        let x = (ev.clamp(AGX_MIN_EV, AGX_MAX_EV) - AGX_MIN_EV) / (AGX_MAX_EV - AGX_MIN_EV);
        agx_contrast(x)
    });
    mat3_mul(&AGX_OUTSET, v).map(|v| v.clamp(0.0, 1.0))
}
