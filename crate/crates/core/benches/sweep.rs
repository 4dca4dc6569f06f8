use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scenario_core::exec::TickConfig;
use scenario_core::fixtures;
use scenario_core::model::{ParamValue, ScenarioGraph};
use scenario_core::registry::Registry;
use scenario_core::sweep::{export_all, sweep, sweep_sequential};
use scenario_core::xosc::ExportOptions;

fn bench_sweep(c: &mut Criterion) {
    let reg = Registry::builtin();
    let g = fixtures::uis1_logical(&reg);
    let mut group = c.benchmark_group("uis1_logical_sweep");
    group.sample_size(20);
    for dt in [0.05, 0.01] {
        let cfg = TickConfig::with_dt(dt);
        group.bench_with_input(BenchmarkId::new("parallel", dt), &cfg, |b, cfg| {
            b.iter(|| sweep(&g, &reg, cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", dt), &cfg, |b, cfg| {
            b.iter(|| sweep_sequential(&g, &reg, cfg).unwrap())
        });
    }
    group.finish();
}

/// The logical UIS1 on a dense grid: 121 speeds times 8 radii.
fn dense_grid(reg: &Registry) -> ScenarioGraph {
    let mut g = fixtures::uis1_logical(reg);
    let speed = ParamValue::range(2.0, 8.0, 0.05, "m/s").unwrap();
    let radius = ParamValue::set((3..=10).map(|r| f64::from(r).into()).collect(), "m").unwrap();
    g.set_parameter(reg, &"bike_accelerate".into(), "target_velocity", speed).unwrap();
    g.set_parameter(reg, &"sync2".into(), "radius", radius).unwrap();
    g
}

fn bench_dense_sweep(c: &mut Criterion) {
    let reg = Registry::builtin();
    let g = dense_grid(&reg);
    let cfg = TickConfig::default();
    let mut group = c.benchmark_group("dense_grid_sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| sweep(&g, &reg, &cfg).unwrap()));
    group.bench_function("sequential", |b| {
        b.iter(|| sweep_sequential(&g, &reg, &cfg).unwrap())
    });
    group.finish();
}

fn bench_export(c: &mut Criterion) {
    let reg = Registry::builtin();
    let g = fixtures::uis1_logical(&reg);
    let opts = ExportOptions::default();
    c.bench_function("uis1_logical_export_all", |b| {
        b.iter(|| export_all(&g, &reg, &opts).unwrap())
    });
}

criterion_group!(benches, bench_sweep, bench_dense_sweep, bench_export);
criterion_main!(benches);
