//! Shared fixtures and benchmark groups for `resiren-core`.

use criterion::{BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use resiren_core::data::{
    build_biomes_task, fit_normalization, generate_synthetic_climatology, sample_epoch, ClimGrid, MonthPolicy,
    SplitFractions,
};
use resiren_core::encoding::EncodingKind;
use resiren_core::net::{backward, forward, init_parameters, NetworkConfig, OutputGradient};
use resiren_core::probe::{fit_probe, LocationFeatures, ProbeData, ProbeKind, ProbeSpec};
use resiren_core::rng::SplitMix64;
use resiren_core::train::{train_step, AdamConfig, OptimizerState};

pub fn desk_grid() -> ClimGrid {
    fit_normalization(generate_synthetic_climatology(64, 32, 8, 1).expect("valid dims")).expect("non-constant grid")
}

pub fn desk_network() -> NetworkConfig {
    NetworkConfig {
        depth: 8,
        hidden_dim: 128,
        embedding_dim: 64,
        output_dim: 8,
        ..NetworkConfig::default()
    }
}

pub fn random_inputs(n: usize, dim: usize, seed: u64) -> Array2<f32> {
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((n, dim), |_| rng.uniform(-1.0, 1.0) as f32)
}

pub fn network(c: &mut Criterion) {
    let cfg = desk_network();
    let params = init_parameters(&cfg, 0).expect("valid config");
    let mut group = c.benchmark_group("network");
    for batch in [32usize, 1024] {
        let x = random_inputs(batch, cfg.input_dim, 1);
        group.throughput(Throughput::Elements(batch as u64));
        group.bench_with_input(BenchmarkId::new("forward", batch), &x, |b, x| {
            b.iter(|| forward(&cfg, &params, x.view(), false, true).expect("forward"))
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", batch), &x, |b, x| {
            b.iter(|| {
                let out = forward(&cfg, &params, x.view(), true, true).expect("forward");
                let g = Array2::<f32>::ones((batch, cfg.output_dim));
                backward(&cfg, &params, out.trace.as_ref(), OutputGradient::Head(g.view())).expect("backward")
            })
        });
    }
    group.finish();
}

pub fn training(c: &mut Criterion) {
    let grid = desk_grid();
    let cfg = desk_network();
    let enc = EncodingKind::for_input_dim(cfg.input_dim, None).expect("valid dim");
    let batch = sample_epoch(&grid, 32, 0, MonthPolicy::Random, enc)
        .expect("sampler")
        .next()
        .expect("one batch");
    let adam = AdamConfig::default();
    let mut group = c.benchmark_group("training");
    group.bench_function("train_step_32", |b| {
        let mut params = init_parameters(&cfg, 0).expect("valid config");
        let mut state = OptimizerState::new(&params);
        b.iter(|| train_step(&cfg, &mut params, &mut state, &adam, &batch).expect("step"))
    });
    group.bench_function("epoch_plan", |b| {
        b.iter(|| {
            sample_epoch(&grid, 32, 3, MonthPolicy::Random, enc)
                .expect("sampler")
                .count()
        })
    });
    group.finish();
}

pub fn data(c: &mut Criterion) {
    let mut group = c.benchmark_group("data");
    group.sample_size(20);
    group.bench_function("generate_64x32x8", |b| {
        b.iter(|| generate_synthetic_climatology(64, 32, 8, 1).expect("valid dims"))
    });
    let grid = desk_grid();
    let bytes = grid.to_bytes();
    group.bench_function("grid_round_trip", |b| {
        b.iter(|| ClimGrid::from_bytes(&bytes).expect("valid bytes"))
    });
    group.finish();
}

pub fn probing(c: &mut Criterion) {
    let grid = desk_grid();
    let task = build_biomes_task(&grid, 400, 6, SplitFractions::BIOMES, 2).expect("task");
    let data = ProbeData::build(&LocationFeatures, &task, &grid, 0).expect("features");
    let mut group = c.benchmark_group("probing");
    group.sample_size(10);
    for kind in [ProbeKind::Linear, ProbeKind::Mlp] {
        let spec = ProbeSpec {
            epochs: 20,
            ..ProbeSpec::with_kind(kind)
        };
        group.bench_function(kind.name(), |b| b.iter(|| fit_probe(&data, &spec, 0).expect("fit")));
    }
    group.finish();
}
