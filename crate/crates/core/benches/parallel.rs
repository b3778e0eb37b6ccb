//! Sequential vs rayon for the data-parallel hot paths.
//!
//! `cargo bench -p mspcg-core` runs both arms; with `--no-default-features`
//! the parallel arm falls back to sequential, which makes a handy baseline.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mspcg_core::baselines::Baseline;
use mspcg_core::extract::{kmeans_points, KRange};
use mspcg_core::geom::chamfer_distance_with;
use mspcg_core::model::ModelConfig;
use mspcg_core::par::Parallelism;
use mspcg_core::train::{
    build_dataset, build_dataset_with, evaluate_with, synth_random_shape, train_with, DatasetSpec,
    EvalOptions, ShapeFamily, TrainConfig,
};

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn chamfer(c: &mut Criterion) {
    let a = synth_random_shape(ShapeFamily::Table, 2048, 1)
        .unwrap()
        .cloud;
    let b = synth_random_shape(ShapeFamily::Table, 2048, 2)
        .unwrap()
        .cloud;
    let mut group = c.benchmark_group("chamfer_2048");
    for (name, mode) in MODES {
        group.bench_function(name, |bch| {
            bch.iter(|| chamfer_distance_with(black_box(&a), black_box(&b), mode).unwrap())
        });
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let cloud = synth_random_shape(ShapeFamily::Lamp, 2048, 3)
        .unwrap()
        .cloud;
    let mut group = c.benchmark_group("kmeans_2048_k64");
    for (name, mode) in MODES {
        group.bench_function(name, |bch| {
            bch.iter(|| kmeans_points(black_box(&cloud.points), 64, 0, mode).unwrap())
        });
    }
    group.finish();
}

fn dataset(c: &mut Criterion) {
    let spec = DatasetSpec {
        msgs_per_shape: 2,
        ..DatasetSpec::training(2, 0)
    };
    let mut group = c.benchmark_group("build_dataset_14_shapes");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(name, |bch| {
            bch.iter(|| build_dataset_with(black_box(&spec), mode).unwrap())
        });
    }
    group.finish();
}

fn training_and_eval(c: &mut Criterion) {
    let train = build_dataset(&DatasetSpec {
        msgs_per_shape: 2,
        ..DatasetSpec::training(1, 0)
    })
    .unwrap();
    let test = build_dataset(&DatasetSpec::test(2, KRange::new(16, 64), 1)).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        model: ModelConfig {
            channels: 32,
            decoder_widths: vec![64, 32],
            ..ModelConfig::default()
        },
        ..Default::default()
    };
    let mut group = c.benchmark_group("desk_scale");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(
            BenchmarkId::new("train_epoch_14_pairs", name),
            &mode,
            |bch, &mode| {
                bch.iter(|| {
                    train_with(&train, &cfg, cfg.initial_weights().unwrap(), mode, |_| {}).unwrap()
                })
            },
        );
        group.bench_with_input(
            BenchmarkId::new("eval_gaussian_14_shapes", name),
            &mode,
            |bch, &mode| {
                bch.iter(|| {
                    evaluate_with(
                        &Baseline::Gaussian { kappa: 0.5 },
                        "g",
                        &test,
                        &EvalOptions::plain(0),
                        mode,
                    )
                    .unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, chamfer, kmeans, dataset, training_and_eval);
criterion_main!(benches);
