use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spreadcast::info::{mutual_information, rank_features};
use spreadcast::learners::{self, LearnerKind};
use spreadcast::stacking::{fit_stacked, DEFAULT_BASE};
use spreadcast::*;

fn benchmark_data() -> Dataset {
    generate_synthetic(&SyntheticConfig { seed: 1, ..Default::default() }).unwrap()
}

fn information(c: &mut Criterion) {
    let ds = benchmark_data();
    let (x, y) = (ds.column(0), ds.target().to_vec());
    c.bench_function("mutual_information_600", |b| b.iter(|| mutual_information(black_box(&x), black_box(&y))));
    c.bench_function("rank_features_600x40", |b| b.iter(|| rank_features(black_box(&ds))));
}

fn learners(c: &mut Criterion) {
    let ds = benchmark_data().slice_rows(0..420).unwrap();
    let x = ds.features();
    let y = ds.target();
    let mut group = c.benchmark_group("fit_420x40");
    group.sample_size(10);
    for kind in LearnerKind::ALL {
        let spec = RegressorSpec::default_for(kind, 7);
        group.bench_function(kind.id(), |b| b.iter(|| learners::fit(&spec, black_box(&x), black_box(y))));
    }
    group.finish();
}

fn stacking(c: &mut Criterion) {
    let ds = benchmark_data().slice_rows(0..420).unwrap();
    let x = ds.features();
    let y = ds.target();
    let specs: Vec<RegressorSpec> = DEFAULT_BASE.iter().map(|&k| RegressorSpec::default_for(k, 7)).collect();
    let meta = PipelineConfig::default().meta_spec();
    let mut group = c.benchmark_group("stacking_420x40");
    group.sample_size(10);
    for mode in [StackingMode::InSample, StackingMode::KFold] {
        group.bench_function(mode.to_string(), |b| {
            b.iter(|| fit_stacked(&specs, &meta, black_box(&x), black_box(y), mode, 5))
        });
    }
    group.finish();
}

fn backtest(c: &mut Criterion) {
    let ds = generate_synthetic(&SyntheticConfig { seed: 2, n: 120, d: 40, ..Default::default() }).unwrap();
    let cfg = PipelineConfig { seed: 2, ..Default::default() };
    let mut group = c.benchmark_group("backtest");
    group.sample_size(10);
    group.bench_function("grid_120x40", |b| b.iter(|| run_backtest(black_box(&ds), &cfg)));
    group.finish();
}

criterion_group!(benches, information, learners, stacking, backtest);
criterion_main!(benches);
