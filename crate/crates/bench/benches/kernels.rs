use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neurcam::gates::{entmax, DEFAULT_ALPHA};
use neurcam::kmeans::{mbk_fit, KmeansConfig};
use neurcam::metrics::{adjusted_rand, nmi, unsup_accuracy, PartitionPair};
use neurcam::model::init_model;
use neurcam::objectives::{batch_objective, Phase};
use neurcam::synth::gaussian_blobs;
use neurcam::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_entmax(c: &mut Criterion) {
    let mut group = c.benchmark_group("entmax");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for d in [8usize, 64, 512] {
        let logits: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(d), &logits, |b, z| {
            b.iter(|| entmax(black_box(z), DEFAULT_ALPHA))
        });
    }
    group.finish();
}

fn bench_objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_objective");
    group.sample_size(20);
    let (x, _) = gaussian_blobs(512, 16, 8, 6.0, 1);
    for (name, pairs) in [("single", 0usize), ("pairs", 4)] {
        let cfg = TrainConfig {
            k: 8,
            num_single: 16,
            num_pair: pairs,
            hidden: 64,
            basis: 32,
            batch_size: 512,
            ..TrainConfig::default()
        };
        let centroids = x.select_rows(&(0..8).collect::<Vec<_>>());
        let model = init_model(&cfg, 16, 0, &centroids).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| batch_objective(&model, Some(&model), black_box(&x), &x, &cfg, Phase::Anneal).unwrap())
        });
    }
    group.finish();
}

fn bench_kmeans(c: &mut Criterion) {
    let (x, _) = gaussian_blobs(2000, 8, 5, 5.0, 2);
    let cfg = KmeansConfig {
        k: 5,
        n_init: 1,
        max_epochs: 20,
        ..KmeansConfig::default()
    };
    c.bench_function("mbk_fit_2000x8", |b| b.iter(|| mbk_fit(black_box(&x), &cfg).unwrap()));
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..10)).collect();
    let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..10)).collect();
    c.bench_function("metrics_10k", |bench| {
        bench.iter(|| {
            let p = PartitionPair::new(black_box(&a), black_box(&b)).unwrap();
            (adjusted_rand(&p), nmi(&p), unsup_accuracy(&p))
        })
    });
}

criterion_group!(benches, bench_entmax, bench_objective, bench_kmeans, bench_metrics);
criterion_main!(benches);
