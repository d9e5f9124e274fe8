use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relit_core::fixtures::sky_env;
use relit_core::prefilter::{build_dfg_lut_with, build_pyramid, DFG_RESOLUTION, DFG_SAMPLES};
use relit_core::{Execution, PrefilterConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pyramid(c: &mut Criterion) {
    let env = sky_env(256);
    let mut group = c.benchmark_group("pyramid_256");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opt = PrefilterConfig::optimization().with_base_resolution(256).with_execution(exec);
        group.bench_with_input(BenchmarkId::new("optimization", name), &opt, |b, cfg| {
            b.iter(|| build_pyramid(black_box(&env), cfg).unwrap())
        });
        let rel = PrefilterConfig::relight().with_execution(exec);
        group.bench_with_input(BenchmarkId::new("relight", name), &rel, |b, cfg| {
            b.iter(|| build_pyramid(black_box(&env), cfg).unwrap())
        });
    }
    group.finish();
}

fn dfg(c: &mut Criterion) {
    let mut group = c.benchmark_group("dfg_lut");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| build_dfg_lut_with(DFG_RESOLUTION, DFG_SAMPLES, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pyramid, dfg);
criterion_main!(benches);
