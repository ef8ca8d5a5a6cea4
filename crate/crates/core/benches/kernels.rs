//! Sequential versus data-parallel execution of the hot kernels.

use std::hint::black_box;

use adcp::data::{synthetic_set, SceneSpec};
use adcp::pipeline::{evaluate, Model, ModelConfig, Preset};
use adcp::tensor::exec::Exec;
use adcp::tensor::{conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward, Tensor};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn filled(shape: &[usize]) -> Tensor<f32> {
    Tensor::from_fn(shape, |i| ((i * 2654435761) % 1000) as f32 / 1000.0 - 0.5)
}

fn conv(c: &mut Criterion) {
    let x2 = filled(&[16, 64, 96]);
    let w2 = filled(&[16, 16, 3, 3]);
    let b2 = filled(&[16]);
    let y2 = conv2d_forward(&x2, &w2, &b2, 1, 1, Exec::Sequential).unwrap();
    let x3 = filled(&[8, 12, 16, 24]);
    let w3 = filled(&[8, 8, 3, 3, 3]);
    let b3 = filled(&[8]);
    let y3 = conv3d_forward(&x3, &w3, &b3, 1, 1, Exec::Sequential).unwrap();

    let mut g = c.benchmark_group("conv");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("conv2d_forward", name), &exec, |b, &e| {
            b.iter(|| conv2d_forward(black_box(&x2), &w2, &b2, 1, 1, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("conv2d_backward", name), &exec, |b, &e| {
            b.iter(|| conv2d_backward(&x2, &w2, black_box(&y2), 1, 1, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("conv3d_forward", name), &exec, |b, &e| {
            b.iter(|| conv3d_forward(black_box(&x3), &w3, &b3, 1, 1, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("conv3d_backward", name), &exec, |b, &e| {
            b.iter(|| conv3d_backward(&x3, &w3, black_box(&y3), 1, 1, e).unwrap())
        });
    }
    g.finish();
}

fn batch_eval(c: &mut Criterion) {
    let config = ModelConfig {
        c: 2,
        c3d: 4,
        c_dop: 8,
        n: 5,
        d_max: 64,
        dic_width: 16,
        ..ModelConfig::preset(Preset::S, 5)
    };
    let model = Model::new(config, 0).unwrap();
    let data = synthetic_set(&SceneSpec::default(), 4).unwrap();
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("batch_of_4", name), &exec, |b, &e| {
            b.iter(|| evaluate(&model, black_box(&data), e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, conv, batch_eval);
criterion_main!(benches);
