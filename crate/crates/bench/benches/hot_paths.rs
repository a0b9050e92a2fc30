use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hysim_bench::{gaussian, labeled, sentences};
use hysim_core::divergence::{median_heuristic_bandwidth, mmd2_biased, mmd2_unbiased, permutation_test};
use hysim_core::embedder::hash_embed_text;
use hysim_core::manifold::{distance_to_manifold, fit_pca, ComponentSelector};
use hysim_core::trainer::{train, TrainConfig};
use std::hint::black_box;

fn mmd(c: &mut Criterion) {
    let mut g = c.benchmark_group("mmd2");
    for n in [100, 400] {
        let x = gaussian(n, 16, 1);
        let y = gaussian(n, 16, 2);
        let h = median_heuristic_bandwidth(&x).unwrap();
        g.bench_with_input(BenchmarkId::new("biased", n), &n, |b, _| b.iter(|| mmd2_biased(&x, &y, h).unwrap()));
        g.bench_with_input(BenchmarkId::new("unbiased", n), &n, |b, _| b.iter(|| mmd2_unbiased(&x, &y, h).unwrap()));
    }
    g.finish();

    let x = gaussian(50, 5, 3);
    let y = gaussian(50, 5, 4);
    c.bench_function("permutation_test/n50_p200", |b| b.iter(|| permutation_test(&x, &y, 1.0, 200, 7).unwrap()));
}

fn manifold(c: &mut Criterion) {
    let x = gaussian(2000, 24, 5);
    c.bench_function("fit_pca/2000x24", |b| b.iter(|| fit_pca(black_box(&x), ComponentSelector::Components(4)).unwrap()));
    let model = fit_pca(&x, ComponentSelector::Components(4)).unwrap();
    c.bench_function("distance_to_manifold/2000", |b| {
        b.iter(|| x.iter().map(|v| distance_to_manifold(v, &model).unwrap()).sum::<f64>())
    });
}

fn embedder(c: &mut Criterion) {
    let texts = sentences(1000, 6);
    c.bench_function("hash_embed_text/1000x256", |b| {
        b.iter(|| texts.iter().map(|t| hash_embed_text(t, 256).unwrap()).count())
    });
}

fn training(c: &mut Criterion) {
    let set = labeled(2000, 8, 8);
    let w = vec![1.0; set.len()];
    let config = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    c.bench_function("train/2000x8_10_epochs", |b| b.iter(|| train(&set, &w, None, 2, &config).unwrap()));
}

criterion_group!(benches, mmd, manifold, embedder, training);
criterion_main!(benches);
