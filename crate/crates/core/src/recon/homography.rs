use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

type Mat8 = SMatrix<f64, 8, 8>;
type Vec8 = SVector<f64, 8>;

const MIN_ABS_DET: f64 = 1e-12;

/// Projective map between pixel coordinates, pixel centers at integer
/// positions. The bottom-right entry is always 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes `m` so its bottom-right entry is 1.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-12 || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("homography has no finite h33 normalization".into()));
        }
        let h = Self { m: m / s };
        if h.m.determinant().abs() < MIN_ABS_DET {
            return Err(Error::Numeric("homography is singular".into()));
        }
        Ok(h)
    }

    /// Row-major entries, the last one being 1.
    pub fn to_array(&self) -> [f64; 9] {
        let m = &self.m;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn from_array(a: [f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(&a))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::Numeric("homography is not invertible".into()))?;
        Self::from_matrix(inv)
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.m * other.m)
    }

    /// Maps a point; `None` when it lands on or behind the line at infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = self.m * Vector3::new(x, y, 1.0);
        (p.z > 1e-12).then(|| (p.x / p.z, p.y / p.z))
    }

    /// Four-point correspondence solve.
    pub fn from_corners(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> Result<Self> {
        let mut a = Mat8::zeros();
        let mut b = Vec8::zeros();
        for (i, (&(x, y), &(u, v))) in src.iter().zip(&dst).enumerate() {
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numeric("degenerate corner configuration".into()))?;
        Self::from_matrix(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
    }
}

fn image_corners(w: usize, h: usize) -> [(f64, f64); 4] {
    let (x1, y1) = ((w - 1) as f64, (h - 1) as f64);
    [(0.0, 0.0), (x1, 0.0), (x1, y1), (0.0, y1)]
}

/// Mean distance between the images of the four corner pixel centers.
pub fn corner_error(a: &Homography, b: &Homography, width: usize, height: usize) -> f64 {
    image_corners(width, height)
        .iter()
        .map(|&(x, y)| match (a.apply(x, y), b.apply(x, y)) {
            (Some(p), Some(q)) => ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt(),
            _ => f64::INFINITY,
        })
        .sum::<f64>()
        / 4.0
}

/// Bilinear sample of all channels at a continuous pixel position. `None`
/// outside the hull of the pixel centers.
#[inline]
fn bilinear(img: &ImagePlane, x: f64, y: f64, out: &mut [f32]) -> bool {
    let (w, h) = img.dims();
    const EPS: f64 = 1e-9;
    if !(x >= -EPS && y >= -EPS && x <= (w - 1) as f64 + EPS && y <= (h - 1) as f64 + EPS) {
        return false;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    for c in 0..out.len() {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy) as f32;
    }
    true
}

/// Inverse-mapped bilinear warp: output pixel `p` reads the input at
/// `h⁻¹·p`. Returns the warped image and a 1-channel validity mask; invalid
/// pixels are zero.
pub fn warp(image: &ImagePlane, h: &Homography) -> Result<(ImagePlane, ImagePlane)> {
    let inv = h.inverse()?;
    let (w, ht, c) = (image.width(), image.height(), image.channels());
    let mut out = ImagePlane::new(w, ht, c);
    let mut valid = ImagePlane::new(w, ht, 1);
    for y in 0..ht {
        for x in 0..w {
            if let Some((sx, sy)) = inv.apply(x as f64, y as f64) {
                if bilinear(image, sx, sy, out.pixel_mut(x, y)) {
                    valid.set(x, y, 0, 1.0);
                }
            }
        }
    }
    Ok((out, valid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Pyramid levels, coarsest first; each level halves the resolution.
    pub levels: usize,
    pub max_iterations: usize,
    /// Consecutive rejected steps that end a level.
    pub patience: u32,
    /// Relative loss improvement below which a level has converged.
    pub tolerance: f64,
    /// Residual floor of the reweighted L1 weights.
    pub irls_epsilon: f64,
    pub initial_damping: f64,
    /// Largest corner displacement from the identity, as a fraction of the
    /// image size.
    pub max_corner_shift: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            levels: 3,
            max_iterations: 50,
            patience: 3,
            tolerance: 1e-7,
            irls_epsilon: 1e-3,
            initial_damping: 1e-3,
            max_corner_shift: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Maps `rendered` pixel positions onto `target` positions.
    pub h: Homography,
    /// Mean L1 over valid pixels at full resolution.
    pub loss: f64,
    pub init_loss: f64,
    /// Set when the parameters were unobservable or the iteration left the
    /// admissible region; `h` is then `init`.
    pub diverged: bool,
    pub iterations: usize,
}

struct Level {
    w: usize,
    h: usize,
    src: ImagePlane,
    grad: ImagePlane,
    dst: ImagePlane,
    mask: ImagePlane,
}

impl Level {
    fn new(src: ImagePlane, dst: ImagePlane, mask: ImagePlane) -> Self {
        let (w, h) = src.dims();
        let grad = ImagePlane::from_fn(w, h, |x, y| {
            let (xa, xb) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (ya, yb) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let gx = (src.get(xb, y, 0) - src.get(xa, y, 0)) / (xb - xa).max(1) as f32;
            let gy = (src.get(x, yb, 0) - src.get(x, ya, 0)) / (yb - ya).max(1) as f32;
            [gx, gy]
        });
        Self { w, h, src, grad, dst, mask }
    }

    /// Normalized coordinate of a pixel center.
    fn to_norm(&self, x: f64, y: f64) -> (f64, f64) {
        ((2.0 * x + 1.0) / self.w as f64 - 1.0, (2.0 * y + 1.0) / self.h as f64 - 1.0)
    }

    fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        ((u + 1.0) * 0.5 * self.w as f64 - 0.5, (v + 1.0) * 0.5 * self.h as f64 - 0.5)
    }

    /// Loss and, when `system` is set, the reweighted normal equations.
    fn evaluate(&self, g: &[f64; 8], eps: f64, mut system: Option<(&mut Mat8, &mut Vec8)>) -> f64 {
        let (mut sum, mut count) = (0.0f64, 0usize);
        let mut s = [0.0f32; 1];
        let mut gr = [0.0f32; 2];
        for y in 0..self.h {
            for x in 0..self.w {
                if self.mask.get(x, y, 0) < 0.5 {
                    continue;
                }
                let (u, v) = self.to_norm(x as f64, y as f64);
                let den = g[6] * u + g[7] * v + 1.0;
                if den <= 1e-9 {
                    continue;
                }
                let qu = (g[0] * u + g[1] * v + g[2]) / den;
                let qv = (g[3] * u + g[4] * v + g[5]) / den;
                let (px, py) = self.to_pixel(qu, qv);
                if !bilinear(&self.src, px, py, &mut s) {
                    continue;
                }
                let r = f64::from(s[0]) - f64::from(self.dst.get(x, y, 0));
                sum += r.abs();
                count += 1;
                if let Some((a, b)) = system.as_mut() {
                    bilinear(&self.grad, px, py, &mut gr);
                    let gu = f64::from(gr[0]) * 0.5 * self.w as f64;
                    let gv = f64::from(gr[1]) * 0.5 * self.h as f64;
                    let inv = 1.0 / den;
                    let j = Vec8::from([
                        gu * u * inv,
                        gu * v * inv,
                        gu * inv,
                        gv * u * inv,
                        gv * v * inv,
                        gv * inv,
                        -(gu * qu + gv * qv) * u * inv,
                        -(gu * qu + gv * qv) * v * inv,
                    ]);
                    let wgt = 1.0 / r.abs().max(eps);
                    a.ger(wgt, &j, &j, 1.0);
                    b.axpy(wgt * r, &j, 1.0);
                }
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            sum / count as f64
        }
    }
}

fn downsample(img: &ImagePlane, min: bool) -> ImagePlane {
    let (w, h) = ((img.width() / 2).max(1), (img.height() / 2).max(1));
    ImagePlane::from_fn(w, h, |x, y| {
        let v = [
            img.get(2 * x, 2 * y, 0),
            img.get((2 * x + 1).min(img.width() - 1), 2 * y, 0),
            img.get(2 * x, (2 * y + 1).min(img.height() - 1), 0),
            img.get((2 * x + 1).min(img.width() - 1), (2 * y + 1).min(img.height() - 1), 0),
        ];
        if min {
            [v.iter().copied().fold(f32::INFINITY, f32::min)]
        } else {
            [0.25 * (v[0] + v[1] + v[2] + v[3])]
        }
    })
}

fn gray(img: &ImagePlane, what: &str) -> Result<ImagePlane> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => Ok(img.to_gray()),
        c => Err(Error::Shape(format!("{what} has {c} channels; expected 1 or 3"))),
    }
}

fn norm_transform(w: usize, h: usize) -> Matrix3<f64> {
    Matrix3::new(2.0 / w as f64, 0.0, 1.0 / w as f64 - 1.0, 0.0, 2.0 / h as f64, 1.0 / h as f64 - 1.0, 0.0, 0.0, 1.0)
}

fn params(m: &Matrix3<f64>) -> [f64; 8] {
    let m = m / m[(2, 2)];
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)]]
}

fn matrix(g: &[f64; 8]) -> Matrix3<f64> {
    Matrix3::new(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], 1.0)
}

/// Whether the normalized inverse map keeps the corners within `bound`
/// (normalized units) of where the identity puts them.
fn admissible(g: &[f64; 8], bound: f64) -> bool {
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].iter().all(|&(u, v)| {
        let den = g[6] * u + g[7] * v + 1.0;
        if den <= 1e-6 {
            return false;
        }
        let qu = (g[0] * u + g[1] * v + g[2]) / den;
        let qv = (g[3] * u + g[4] * v + g[5]) / den;
        (qu - u).abs() <= bound && (qv - v).abs() <= bound
    })
}

/// Jacobi-scaled normal matrix is numerically rank deficient.
fn unobservable(a: &Mat8) -> bool {
    let d: Vec<f64> = (0..8).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 1e-12)) {
        return true;
    }
    let s = Mat8::from_fn(|i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = s.symmetric_eigenvalues();
    eig.min() < 1e-10 * eig.max()
}

/// Fits `h` so that `warp(rendered, h)` matches `target` under mean L1.
pub fn fit_homography(rendered: &ImagePlane, target: &ImagePlane, init: &Homography, opts: &FitOptions) -> Result<FitResult> {
    fit_homography_masked(rendered, target, None, init, opts)
}

/// As [`fit_homography`], restricted to target pixels where `mask > 0.5`.
///
/// Coarse-to-fine Levenberg-Marquardt on the inverse map in normalized
/// coordinates with reweighted least squares for the L1 loss. Never returns
/// a loss above the loss of `init`.
pub fn fit_homography_masked(
    rendered: &ImagePlane,
    target: &ImagePlane,
    mask: Option<&ImagePlane>,
    init: &Homography,
    opts: &FitOptions,
) -> Result<FitResult> {
    rendered.ensure_same_shape(target, "target")?;
    let (w, h) = rendered.dims();
    if w < 2 || h < 2 {
        return Err(Error::Shape("homography fit needs at least 2x2 pixels".into()));
    }
    let mask = match mask {
        Some(m) if m.dims() != (w, h) || m.channels() != 1 => {
            return Err(Error::Shape("fit mask must be 1-channel at image resolution".into()))
        }
        Some(m) => m.clone(),
        None => ImagePlane::filled(w, h, 1, 1.0),
    };
    let mut levels = vec![Level::new(gray(rendered, "rendered")?, gray(target, "target")?, mask)];
    while levels.len() < opts.levels.max(1) {
        let last = levels.last().expect("non-empty");
        if last.w.min(last.h) < 16 {
            break;
        }
        levels.push(Level::new(downsample(&last.src, false), downsample(&last.dst, false), downsample(&last.mask, true)));
    }

    let t0 = norm_transform(w, h);
    let t0_inv = t0.try_inverse().expect("diagonal transform");
    let g_init = params(&(t0 * init.inverse()?.matrix() * t0_inv));
    let finest = &levels[0];
    let init_loss = finest.evaluate(&g_init, opts.irls_epsilon, None);
    if !init_loss.is_finite() {
        return Err(Error::Numeric("initial homography leaves no overlap".into()));
    }
    let bound = 2.0 * opts.max_corner_shift;
    let mut g = g_init;
    let mut diverged = !admissible(&g, bound);
    let mut iterations = 0;

    'levels: for level in levels.iter().rev() {
        if diverged {
            break;
        }
        let mut lambda = opts.initial_damping;
        let mut bad = 0;
        for _ in 0..opts.max_iterations {
            let mut a = Mat8::zeros();
            let mut b = Vec8::zeros();
            let loss = level.evaluate(&g, opts.irls_epsilon, Some((&mut a, &mut b)));
            if !loss.is_finite() || unobservable(&a) {
                diverged = true;
                break 'levels;
            }
            if loss <= 1e-12 {
                break;
            }
            loop {
                iterations += 1;
                let mut damped = a;
                for i in 0..8 {
                    damped[(i, i)] *= 1.0 + lambda;
                }
                let step = damped.cholesky().map(|c| c.solve(&(-b)));
                let accepted = step.and_then(|d| {
                    let cand: [f64; 8] = std::array::from_fn(|i| g[i] + d[i]);
                    let l = level.evaluate(&cand, opts.irls_epsilon, None);
                    (admissible(&cand, bound) && l < loss).then_some((cand, l))
                });
                match accepted {
                    Some((cand, l)) => {
                        g = cand;
                        lambda = (lambda * 0.3).max(1e-9);
                        bad = 0;
                        if (loss - l) / loss < opts.tolerance {
                            continue 'levels;
                        }
                        break;
                    }
                    None => {
                        lambda *= 4.0;
                        bad += 1;
                        if bad >= opts.patience {
                            continue 'levels;
                        }
                    }
                }
            }
        }
    }

    let loss = if diverged { f64::INFINITY } else { finest.evaluate(&g, opts.irls_epsilon, None) };
    if diverged || !(loss <= init_loss) {
        return Ok(FitResult { h: *init, loss: init_loss, init_loss, diverged, iterations });
    }
    let g_pix = t0_inv * matrix(&g) * t0;
    Ok(FitResult {
        h: Homography::from_matrix(g_pix)?.inverse()?,
        loss,
        init_loss,
        diverged: false,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::textured_image;

    #[test]
    fn identity_warp_is_exact() {
        let img = textured_image(32, 1);
        let (out, valid) = warp(&img, &Homography::identity()).unwrap();
        assert_eq!(out, img);
        assert!(valid.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn translation_of_a_ramp() {
        let img = ImagePlane::from_fn(32, 8, |x, _| [0.01 * x as f32]);
        let (out, valid) = warp(&img, &Homography::translation(2.5, 0.0)).unwrap();
        for x in 0..32 {
            if x >= 3 {
                assert_eq!(valid.get(x, 4, 0), 1.0);
                assert!((out.get(x, 4, 0) - 0.01 * (x as f32 - 2.5)).abs() < 1e-5);
            } else {
                assert_eq!(valid.get(x, 4, 0), 0.0);
                assert_eq!(out.get(x, 4, 0), 0.0);
            }
        }
    }

    #[test]
    fn corners_round_trip() {
        let src = image_corners(100, 80);
        let dst = [(1.0, 2.0), (101.0, -1.0), (98.0, 83.0), (-3.0, 77.0)];
        let h = Homography::from_corners(src, dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let p = h.apply(s.0, s.1).unwrap();
            assert!((p.0 - d.0).abs() < 1e-9 && (p.1 - d.1).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_homography_rejected() {
        assert!(Homography::from_array([1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn self_alignment_stays_at_identity() {
        let img = textured_image(64, 2);
        let r = fit_homography(&img, &img, &Homography::identity(), &FitOptions::default()).unwrap();
        assert!(!r.diverged);
        assert!(r.loss < 1e-9);
        let id = Homography::identity().to_array();
        for (a, b) in r.h.to_array().iter().zip(id) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn flat_image_diverges_to_init() {
        let img = ImagePlane::filled(64, 64, 1, 0.5);
        for target in [ImagePlane::filled(64, 64, 1, 0.4), img.clone()] {
            let r = fit_homography(&img, &target, &Homography::identity(), &FitOptions::default()).unwrap();
            assert!(r.diverged);
            assert_eq!(r.h, Homography::identity());
        }
    }
}
