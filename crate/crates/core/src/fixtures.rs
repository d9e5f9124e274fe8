//! Synthetic G-buffers and environments with analytic ground truth.
//!
//! Geometry is ray-cast through the pinhole camera so normals are exact and
//! every visible normal faces the viewer.

use glam::{Vec2, Vec3};
use serde::{Deserialize, Serialize};

use crate::color::LinearRgb;
use crate::envmap::{uv_to_dir, EnvLayout, EnvironmentMap};
use crate::image::ImagePlane;
use crate::shading::{CameraModel, MaterialGBuffer, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Sphere,
    Plane,
    ThreeSpheres,
}

impl std::str::FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sphere" => Ok(FixtureKind::Sphere),
            "plane" => Ok(FixtureKind::Plane),
            "three-spheres" => Ok(FixtureKind::ThreeSpheres),
            other => Err(format!("unknown fixture kind `{other}`")),
        }
    }
}

/// Material and camera choices for the single-material fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureMaterial {
    pub albedo: LinearRgb,
    pub roughness: f32,
    pub metallic: f32,
    pub frames: usize,
    pub elevation_deg: f32,
    pub projection: Projection,
}

impl Default for FixtureMaterial {
    fn default() -> Self {
        Self {
            albedo: LinearRgb::new(0.8, 0.55, 0.3),
            roughness: 0.5,
            metallic: 0.0,
            frames: 1,
            elevation_deg: 0.0,
            projection: Projection::default(),
        }
    }
}

/// Roughness of the three acceptance spheres, left to right.
pub const THREE_SPHERES_ROUGHNESS: [f32; 3] = [0.2, 0.5, 0.9];
/// Basecolor shared by the acceptance spheres.
pub const THREE_SPHERES_ALBEDO: LinearRgb = LinearRgb::new(0.85, 0.6, 0.35);

struct Sphere {
    center: Vec3,
    radius: f32,
}

impl Sphere {
    /// Nearest hit of a ray from the origin along unit `d`.
    fn hit(&self, d: Vec3) -> Option<Vec3> {
        let b = d.dot(self.center);
        let c = self.center.length_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let t = b - disc.sqrt();
        (t > 0.0).then(|| d * t)
    }
}

/// Camera-space ray direction through the pixel center (towards the scene).
fn primary_ray(cam: &CameraModel, x: usize, y: usize, res: usize) -> (Vec3, Vec3) {
    let v = cam.view_dir(x, y, res, res);
    match cam.projection {
        Projection::Orthographic => {
            let px = 2.0 * (x as f32 + 0.5) / res as f32 - 1.0;
            let py = 1.0 - 2.0 * (y as f32 + 0.5) / res as f32;
            (Vec3::new(px, py, 0.0), -v)
        }
        Projection::Pinhole { .. } => (Vec3::ZERO, -v),
    }
}

fn blank(res: usize, cam: CameraModel) -> MaterialGBuffer {
    MaterialGBuffer {
        albedo: ImagePlane::new(res, res, 3),
        orm: ImagePlane::new(res, res, 3),
        normal: ImagePlane::from_fn(res, res, |_, _| [0.5, 0.5, 1.0]),
        alpha: ImagePlane::new(res, res, 1),
        camera: cam,
        rgb: None,
    }
}

fn write_surface(g: &mut MaterialGBuffer, x: usize, y: usize, n: Vec3, albedo: LinearRgb, r: f32, m: f32) {
    g.albedo.pixel_mut(x, y).copy_from_slice(&albedo.to_array());
    g.orm.pixel_mut(x, y).copy_from_slice(&[0.0, r, m]);
    let n = n.normalize();
    g.normal
        .pixel_mut(x, y)
        .copy_from_slice(&[(n.x + 1.0) * 0.5, (n.y + 1.0) * 0.5, (n.z + 1.0) * 0.5]);
    g.alpha.set(x, y, 0, 1.0);
}

fn render_spheres(
    res: usize,
    cam: CameraModel,
    spheres: &[Sphere],
    material: impl Fn(usize, Vec3, Vec3) -> (LinearRgb, f32, f32),
) -> MaterialGBuffer {
    let mut g = blank(res, cam);
    for y in 0..res {
        for x in 0..res {
            let (origin, dir) = primary_ray(&cam, x, y, res);
            let hit = spheres
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let shifted = Sphere {
                        center: s.center - origin,
                        radius: s.radius,
                    };
                    shifted.hit(dir).map(|p| (i, p + origin))
                })
                .min_by(|a, b| (a.1 - origin).length().total_cmp(&(b.1 - origin).length()));
            if let Some((i, p)) = hit {
                let n = (p - spheres[i].center) / spheres[i].radius;
                let (albedo, r, m) = material(i, p, spheres[i].center);
                write_surface(&mut g, x, y, n, albedo, r, m);
            }
        }
    }
    g
}

fn orbit_cameras(m: &FixtureMaterial) -> Vec<CameraModel> {
    let k = m.frames.max(1);
    (0..k)
        .map(|i| CameraModel::orbit(m.elevation_deg, 360.0 * i as f32 / k as f32, m.projection))
        .collect()
}

/// Frame extent at the scene depth, so the same framing holds for both
/// projections.
fn half_extent(cam: &CameraModel, depth: f32) -> f32 {
    match cam.projection {
        Projection::Pinhole { vertical_fov_deg } => depth * (0.5 * vertical_fov_deg.to_radians()).tan(),
        Projection::Orthographic => 1.0,
    }
}

/// Analytic G-buffers. Sphere and plane use `m` for every covered pixel;
/// the three-spheres scene uses [`THREE_SPHERES_ROUGHNESS`] left to right,
/// with the left half of each sphere dielectric and the right half metal.
pub fn gen_fixture(kind: FixtureKind, res: usize, m: &FixtureMaterial) -> Vec<MaterialGBuffer> {
    orbit_cameras(m)
        .into_iter()
        .map(|cam| match kind {
            FixtureKind::Sphere => {
                let depth = 4.0;
                let radius = 0.8 * half_extent(&cam, depth);
                let s = [Sphere { center: Vec3::new(0.0, 0.0, -depth), radius }];
                render_spheres(res, cam, &s, |_, _, _| (m.albedo, m.roughness, m.metallic))
            }
            FixtureKind::Plane => {
                let mut g = blank(res, cam);
                for y in 0..res {
                    for x in 0..res {
                        write_surface(&mut g, x, y, Vec3::Z, m.albedo, m.roughness, m.metallic);
                    }
                }
                g
            }
            FixtureKind::ThreeSpheres => {
                let depth = 10.0;
                let half = half_extent(&cam, depth);
                let spacing = 0.66 * half;
                let radius = 0.3 * half;
                let spheres: Vec<Sphere> = [-1.0f32, 0.0, 1.0]
                    .iter()
                    .map(|&k| Sphere {
                        center: Vec3::new(k * spacing, 0.0, -depth),
                        radius,
                    })
                    .collect();
                render_spheres(res, cam, &spheres, |i, p, c| {
                    let metallic = if p.x < c.x { 0.0 } else { 1.0 };
                    (THREE_SPHERES_ALBEDO, THREE_SPHERES_ROUGHNESS[i], metallic)
                })
            }
        })
        .collect()
}

/// Uniform octahedral environment.
pub fn constant_env(res: usize, c: LinearRgb) -> EnvironmentMap {
    EnvironmentMap::constant(EnvLayout::Octahedral, res, res, c)
}

/// Octahedral map that is black except for one texel.
pub fn bright_texel_env(res: usize, texel: (usize, usize), value: LinearRgb) -> EnvironmentMap {
    let mut px = ImagePlane::new(res, res, 3);
    px.pixel_mut(texel.0, texel.1).copy_from_slice(&value.to_array());
    EnvironmentMap::new(EnvLayout::Octahedral, px).expect("valid map")
}

/// Texel of an `res²` octahedral map whose center is closest to `dir`.
pub fn texel_towards(res: usize, dir: Vec3) -> (usize, usize) {
    let uv = crate::envmap::dir_to_uv(EnvLayout::Octahedral, dir.normalize());
    let clamp = |v: f32| ((v * res as f32).floor() as usize).min(res - 1);
    (clamp(uv.x), clamp(uv.y))
}

/// Procedural outdoor probe in the map frame (`+Z` up): a graded sky with a
/// broad sun glow above a darker, mottled ground. Radiance spans roughly
/// 0.05 to 12.
pub fn sky_env(res: usize) -> EnvironmentMap {
    let sun = Vec3::new(0.45, -0.35, 0.82).normalize();
    EnvironmentMap::from_fn(EnvLayout::Octahedral, res, res, |d| {
        if d.z >= 0.0 {
            let t = d.z.sqrt();
            let horizon = LinearRgb::new(1.1, 1.0, 0.9);
            let zenith = LinearRgb::new(0.25, 0.45, 1.0);
            let sky = horizon.lerp(zenith, t);
            let c = d.dot(sun).max(0.0);
            let glow = 10.0 * c.powi(64) + 1.5 * c.powi(8);
            sky + LinearRgb::new(1.0, 0.9, 0.7) * glow
        } else {
            let pattern = 0.5 + 0.5 * ((9.0 * d.x).sin() * (7.0 * d.y).cos());
            let ground = LinearRgb::new(0.22, 0.17, 0.1) * (0.4 + 0.6 * pattern);
            ground * (1.0 + d.z * 0.5)
        }
    })
    .expect("finite procedural radiance")
}

/// Texel center direction of an octahedral map.
pub fn octahedral_texel_dir(res: usize, x: usize, y: usize) -> Vec3 {
    let uv = Vec2::new((x as f32 + 0.5) / res as f32, (y as f32 + 0.5) / res as f32);
    uv_to_dir(EnvLayout::Octahedral, uv)
}

/// Smooth 1-channel texture in `[0.1, 0.9]`: a sum of random plane waves
/// with wavelengths between 10 and 48 pixels.
pub fn textured_image(res: usize, seed: u64) -> ImagePlane {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f32, f32, f32)> = (0..12)
        .map(|_| {
            let theta = rng.random::<f32>() * std::f32::consts::TAU;
            let k = std::f32::consts::TAU / rng.random_range(10.0f32..48.0);
            (k * theta.cos(), k * theta.sin(), rng.random::<f32>() * std::f32::consts::TAU)
        })
        .collect();
    ImagePlane::from_fn(res, res, |x, y| {
        let s: f32 = waves
            .iter()
            .map(|&(kx, ky, phase)| (kx * x as f32 + ky * y as f32 + phase).sin())
            .sum();
        [0.5 + 0.4 * (s / waves.len() as f32 * 2.5).tanh()]
    })
}
