use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relit_core::fixtures::{gen_fixture, sky_env, FixtureKind, FixtureMaterial};
use relit_core::oracle::{render_reference, OracleConfig};
use relit_core::prefilter::{build_dfg_lut, build_pyramid, DFG_RESOLUTION, DFG_SAMPLES};
use relit_core::shading::{relight, relight_orbit};
use relit_core::{Execution, PrefilterConfig, ShadingOptions};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn relighting(c: &mut Criterion) {
    let env = sky_env(256);
    let pyramid = build_pyramid(&env, &PrefilterConfig::relight()).unwrap();
    let lut = build_dfg_lut(DFG_RESOLUTION, DFG_SAMPLES).unwrap();
    let single = gen_fixture(FixtureKind::ThreeSpheres, 256, &FixtureMaterial::default());
    let orbit = gen_fixture(
        FixtureKind::Sphere,
        576,
        &FixtureMaterial {
            frames: 21,
            ..Default::default()
        },
    );

    let mut group = c.benchmark_group("relight");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = ShadingOptions {
            execution: exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("frame_256", name), &opts, |b, o| {
            b.iter(|| relight(black_box(&single[0]), &pyramid, &lut, o).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("orbit_21x576", name), &opts, |b, o| {
            b.iter(|| relight_orbit(black_box(&orbit), &pyramid, &lut, o).unwrap())
        });
    }
    group.finish();

    let small = gen_fixture(FixtureKind::ThreeSpheres, 64, &FixtureMaterial::default());
    let mut group = c.benchmark_group("oracle_64_256spp");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = OracleConfig {
            samples_per_pixel: 256,
            execution: exec,
            ..Default::default()
        };
        group.bench_function(name, |b| b.iter(|| render_reference(black_box(&small[0]), &env, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, relighting);
criterion_main!(benches);
