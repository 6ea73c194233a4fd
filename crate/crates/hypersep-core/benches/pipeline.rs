//! Pipeline hot paths, grouped by execution mode so `cargo bench` and
//! `cargo bench --no-default-features` produce directly comparable
//! reports (the two builds are bitwise-identical in results; these
//! numbers show what the rayon fan-out buys).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hypersep_core::augment::{augment_sample, TransformSpec};
use hypersep_core::contrastive::{nt_xent_batch, ContrastiveBatch};
use hypersep_core::execution_mode;
use hypersep_core::nn::{Activation, Network};
use hypersep_core::probe::{train_linear_head, HeadConfig};
use hypersep_core::rng;
use hypersep_core::Tensor;
use rand::Rng;
use std::hint::black_box;

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    t
}

fn bench_forward_backward(c: &mut Criterion) {
    let net = Network::init(
        &[784, 400, 400, 100],
        &[Activation::ReLU, Activation::ReLU, Activation::Identity],
        5,
    )
    .unwrap();
    let batch = random_tensor(64, 784, 11);
    let grad = random_tensor(64, 100, 12);
    c.bench_function(&format!("forward_backward_64/{}", execution_mode()), |b| {
        b.iter(|| {
            let trace = net.forward(black_box(&batch)).unwrap();
            let grads = net.backward(&batch, &trace, &grad).unwrap();
            black_box(grads);
        })
    });
}

fn bench_elastic(c: &mut Criterion) {
    let spec = TransformSpec::default();
    let images = random_tensor(32, 784, 21);
    let images: Vec<Vec<f64>> = (0..32)
        .map(|i| images.row(i).iter().map(|v| v.abs()).collect())
        .collect();
    c.bench_function(&format!("elastic_batch_32/{}", execution_mode()), |b| {
        b.iter_batched(
            || rng::substream(3, 0),
            |mut r| {
                for img in &images {
                    black_box(augment_sample(img, 28, &spec, &mut r).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_nt_xent(c: &mut Criterion) {
    let z = random_tensor(128, 100, 31);
    c.bench_function(&format!("nt_xent_128/{}", execution_mode()), |b| {
        b.iter(|| {
            let cb = ContrastiveBatch::new(black_box(&z), 1.0).unwrap();
            black_box(nt_xent_batch(&cb).unwrap());
        })
    });
}

fn bench_probe_head(c: &mut Criterion) {
    let reprs = random_tensor(512, 400, 41);
    let targets: Vec<u8> = (0..512).map(|i| (i % 2) as u8).collect();
    let cfg = HeadConfig {
        epochs: 2,
        ..HeadConfig::default()
    };
    c.bench_function(&format!("binary_head_512x400/{}", execution_mode()), |b| {
        b.iter(|| black_box(train_linear_head(&reprs, &targets, 2, &cfg).unwrap()))
    });
}

criterion_group! {
    name = pipeline;
    config = Criterion::default().sample_size(10);
    targets = bench_forward_backward, bench_elastic, bench_nt_xent, bench_probe_head
}
criterion_main!(pipeline);
