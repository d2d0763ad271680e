use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loewner_lab::flow::{self, FlowOptions, C};
use loewner_lab::minimizers::{one_point_minimizer, ConstraintSet};
use loewner_lab::sle::{estimate_passage, PassageOptions};
use loewner_lab::zipper::{inverse_transform, ZipOptions};
use loewner_lab::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trace(c: &mut Criterion) {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let mut group = c.benchmark_group("trace");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "minimizer@1e-3"), |b| {
            b.iter(|| flow::trace(&m, m.last_time(), 1e-3, &FlowOptions::default(), exec).unwrap())
        });
    }
    group.finish();
}

fn zipper(c: &mut Criterion) {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let pts = flow::trace(&m, m.last_time(), 2e-3, &FlowOptions::default(), Execution::Parallel)
        .unwrap()
        .points;
    let mut group = c.benchmark_group("inverse_transform");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, pts.len()), |b| {
            b.iter(|| inverse_transform(&pts, &ZipOptions::default(), exec).unwrap())
        });
    }
    group.finish();
}

fn passage(c: &mut Criterion) {
    let cs = ConstraintSet::single(C::from_polar(1.0, PI / 3.0), -1).unwrap();
    let mut group = c.benchmark_group("sle_passage");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "κ=2, 10⁴ paths"), |b| {
            b.iter(|| estimate_passage(2.0, &cs, 10_000, 1, &PassageOptions::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trace, zipper, passage);
criterion_main!(benches);
