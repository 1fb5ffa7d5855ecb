//! Training-path benchmarks over the data-parallel helpers.
//!
//! Run with the default features for the rayon-backed numbers and with
//! `--no-default-features` for the sequential fallback; the group and bench
//! names line up so the two reports compare directly. Within the parallel
//! build, worker counts 1/2/4 show the scheduling overhead and speedup on
//! the same workload.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fedseries_core::ingest::{build_dataset, PipelineConfig, Split};
use fedseries_core::model::{batch_gradient, ForecastModel, ModelConfig, Sample};
use fedseries_core::parallel::with_workers;
use fedseries_core::synth::{noisy_sine_series, SineSpec};

const BATCH: usize = 32;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn fixture() -> (ModelConfig, ForecastModel, Vec<(Vec<f64>, Vec<i64>, f64)>) {
    let cfg = ModelConfig {
        d_model: 64,
        d_head: 16,
        d_ff: 256,
        ..ModelConfig::default()
    };
    let spec = SineSpec { n: 200, ..SineSpec::default() };
    let dataset = build_dataset(&noisy_sine_series(&spec), &PipelineConfig::default()).unwrap();
    let model = ForecastModel::init(cfg.clone(), 0).unwrap();
    let windows: Vec<(Vec<f64>, Vec<i64>, f64)> = dataset
        .windows_of(Split::Train)
        .take(BATCH)
        .map(|w| (w.features.data().to_vec(), w.time_index.clone(), w.target))
        .collect();
    assert_eq!(windows.len(), BATCH);
    (cfg, model, windows)
}

fn bench_batch_gradient(c: &mut Criterion) {
    let (cfg, model, raw) = fixture();
    let tensors: Vec<fedseries_core::tensor::Tensor> = raw
        .iter()
        .map(|(d, _, _)| {
            fedseries_core::tensor::Tensor::new(vec![cfg.seq_len, cfg.n_features], d.clone())
                .unwrap()
        })
        .collect();
    let samples: Vec<Sample> = tensors
        .iter()
        .zip(&raw)
        .map(|(t, (_, ti, y))| Sample { features: t, time_index: ti, target: *y })
        .collect();

    let mut group = c.benchmark_group(format!("batch_gradient/{}", mode()));
    group.throughput(Throughput::Elements(BATCH as u64));
    group.sample_size(10);
    for workers in [1usize, 2, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| {
                with_workers(Some(w), || batch_gradient(&model.params, &cfg, &samples).unwrap())
            });
        });
    }
    group.finish();
}

fn bench_predict_batch(c: &mut Criterion) {
    let (cfg, model, raw) = fixture();
    let tensors: Vec<fedseries_core::tensor::Tensor> = raw
        .iter()
        .map(|(d, _, _)| {
            fedseries_core::tensor::Tensor::new(vec![cfg.seq_len, cfg.n_features], d.clone())
                .unwrap()
        })
        .collect();
    let samples: Vec<Sample> = tensors
        .iter()
        .zip(&raw)
        .map(|(t, (_, ti, y))| Sample { features: t, time_index: ti, target: *y })
        .collect();

    let mut group = c.benchmark_group(format!("predict_batch/{}", mode()));
    group.throughput(Throughput::Elements(BATCH as u64));
    group.sample_size(10);
    for workers in [1usize, 2, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| with_workers(Some(w), || model.predict_batch(&samples).unwrap()));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch_gradient, bench_predict_batch);
criterion_main!(benches);
