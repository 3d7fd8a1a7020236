use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use crossed_fields_bench::default_context;
use crossed_fields_core::eigenscan::{exclusion_report, ScanOptions};
use crossed_fields_core::funcalc::{eigendecompose, spectrum};
use crossed_fields_core::lattice::build_h;
use crossed_fields_core::{SsfEngine, SsfMethod, SsfQuery};

fn assembly(c: &mut Criterion) {
    let ctx = default_context(8.0, 0.25);
    c.bench_function("build_h L=8 dx=0.25", |b| b.iter(|| build_h(&ctx.grid, &ctx.params, &ctx.potential).unwrap()));
}

fn eigensolvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigensolvers");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for l in [3.0, 4.0, 6.0] {
        let ctx = default_context(l, 0.25);
        let h = build_h(&ctx.grid, &ctx.params, &ctx.potential).unwrap();
        g.bench_with_input(BenchmarkId::new("band spectrum", ctx.grid.dim()), &h, |b, h| {
            b.iter(|| spectrum(h).unwrap())
        });
        if ctx.grid.dim() <= 1000 {
            g.bench_with_input(BenchmarkId::new("dense eigensystem", ctx.grid.dim()), &h, |b, h| {
                b.iter(|| eigendecompose(h).unwrap())
            });
        }
    }
    g.finish();
}

fn trace_routes(c: &mut Criterion) {
    let mut g = c.benchmark_group("shift function");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    let ctx = default_context(4.0, 0.25);
    let lambdas: Vec<f64> = (0..=8).map(|k| 1.0 + 0.25 * k as f64).collect();
    let query = SsfQuery::new(lambdas, 0.5, SsfMethod::Both, ctx.clone()).unguarded();
    g.bench_function("both routes, cold cache, L=4", |b| b.iter(|| SsfEngine::default().both(&query).unwrap()));
    let warm = SsfEngine::default();
    warm.both(&query).unwrap();
    g.bench_function("both routes, warm cache, L=4", |b| b.iter(|| warm.both(&query).unwrap()));
    g.bench_function("exclusion report, L=4", |b| {
        b.iter(|| {
            exclusion_report(&ctx.grid, &ctx.params, &ctx.potential, (-3.0, 3.0), &ScanOptions::default()).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, assembly, eigensolvers, trace_routes);
criterion_main!(benches);
