use glam::Vec3;

use relit_core::brdf::MaterialSample;
use relit_core::fixtures::{constant_env, gen_fixture, sky_env, FixtureKind, FixtureMaterial};
use relit_core::oracle::{render_reference, shade_pixel_reference, OracleConfig, PixelInputs};
use relit_core::{EnvironmentMap, LinearRgb};

fn probe_pixels() -> Vec<PixelInputs> {
    let materials = [
        (0.2, 0.0),
        (0.5, 0.0),
        (0.9, 0.0),
        (0.3, 1.0),
        (0.6, 1.0),
        (1.0, 1.0),
        (0.45, 0.5),
        (0.8, 0.25),
    ];
    materials
        .iter()
        .enumerate()
        .map(|(i, &(r, m))| {
            let tilt = i as f32 * 0.17;
            PixelInputs {
                material: MaterialSample::new(LinearRgb::new(0.9, 0.6, 0.3), r, m),
                n: Vec3::new(tilt.sin(), 0.2, tilt.cos()).normalize(),
                v: Vec3::new(-0.3, 0.1, 1.0).normalize(),
            }
        })
        .collect()
}

fn estimate(env: &EnvironmentMap, px: &PixelInputs, spp: u32, seed: u64) -> f64 {
    let cfg = OracleConfig {
        samples_per_pixel: spp,
        seed,
        ..Default::default()
    };
    f64::from(shade_pixel_reference(px, env, &cfg, 0).luminance())
}

#[test]
fn error_decays_at_monte_carlo_rate() {
    let env = sky_env(64);
    let px = probe_pixels()[4];
    let truth = estimate(&env, &px, 1 << 20, 999);
    let counts = [64u32, 256, 1024, 4096];
    let rms: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let trials = 48;
            let mse: f64 = (0..trials)
                .map(|s| (estimate(&env, &px, n, 100 + s) - truth).powi(2))
                .sum::<f64>()
                / trials as f64;
            mse.sqrt()
        })
        .collect();
    // least-squares slope of log error against log sample count
    let xs: Vec<f64> = counts.iter().map(|&n| f64::from(n).ln()).collect();
    let ys: Vec<f64> = rms.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}, rms {rms:?}");
}

#[test]
fn mean_of_small_runs_matches_large_run() {
    let env = sky_env(64);
    for px in probe_pixels() {
        let large = estimate(&env, &px, 65_536, 7);
        let mean = (0..32).map(|s| estimate(&env, &px, 1024, 1000 + s)).sum::<f64>() / 32.0;
        assert!((mean / large - 1.0).abs() < 0.01, "{mean} vs {large} for {px:?}");
    }
}

#[test]
fn independent_seeds_agree_at_full_budget() {
    let m = FixtureMaterial {
        roughness: 0.6,
        ..Default::default()
    };
    let g = &gen_fixture(FixtureKind::Sphere, 32, &m)[0];
    let env = constant_env(16, LinearRgb::WHITE);
    let a = render_reference(g, &env, &OracleConfig { seed: 1, ..Default::default() }).unwrap();
    let b = render_reference(g, &env, &OracleConfig { seed: 2, ..Default::default() }).unwrap();
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (x, y) in a.data().iter().zip(b.data()) {
        diff += f64::from(x - y).powi(2);
        norm += f64::from(*x).powi(2);
    }
    let rel = (diff / norm).sqrt();
    assert!(rel < 0.005, "relative RMS difference {rel}");
}

#[test]
fn zero_samples_rejected() {
    let g = &gen_fixture(FixtureKind::Sphere, 8, &FixtureMaterial::default())[0];
    let cfg = OracleConfig {
        samples_per_pixel: 0,
        ..Default::default()
    };
    assert!(render_reference(g, &sky_env(16), &cfg).is_err());
}
