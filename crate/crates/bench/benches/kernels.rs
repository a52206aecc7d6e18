use std::hint::black_box;

use agfusion_core::accel_features::{accel_feature_vector, highpass_filter};
use agfusion_core::fusion::fused_argmax;
use agfusion_core::mlp::{init_params, loss_grad_flat, MlpDims, TrainingSet};
use agfusion_core::synth::{gen_behavior_like, BehaviorSpec};
use agfusion_core::{AccelFeatureConfig, GnssFeatureConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn filters(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("highpass_filter/256", |b| b.iter(|| highpass_filter(black_box(&x), 0.75)));
}

fn features(c: &mut Criterion) {
    let data = gen_behavior_like(&BehaviorSpec::preset("small").unwrap()).unwrap();
    let dp = &data[0];
    let accel = AccelFeatureConfig::ear();
    let gnss = GnssFeatureConfig::default();
    c.bench_function("accel_features/ear", |b| {
        b.iter(|| accel_feature_vector(black_box(&dp.accel), &accel))
    });
    c.bench_function("gnss_features/all", |b| {
        b.iter(|| agfusion_core::gnss_features::gnss_feature_vector(black_box(dp), &gnss))
    });
}

fn loss_grad(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = MlpDims::new(12, 9, 5);
    let mut set = TrainingSet::new(dims.features);
    for _ in 0..10_000 {
        let row: Vec<f64> = (0..dims.features).map(|_| rng.random_range(-1.0..1.0)).collect();
        set.push(&row, rng.random_range(0..dims.classes)).unwrap();
    }
    let theta = init_params(dims, 3).to_flat();
    let mut grad = vec![0.0; theta.len()];
    c.bench_function("loss_grad_flat/12-9-5/10k", |b| {
        b.iter(|| loss_grad_flat(dims, black_box(&theta), &set, 1e-3, &mut grad))
    });
}

fn fusion(c: &mut Criterion) {
    let za = [0.3, -1.2, 2.0, 0.1, -0.4];
    let zg = [1.1, 0.2, -0.3, 0.9, 0.0];
    let ln_p = [-0.8, -2.6, -1.2, -3.0, -4.0];
    c.bench_function("fused_argmax/5", |b| {
        b.iter(|| fused_argmax(black_box(&za), black_box(&zg), black_box(&ln_p)))
    });
}

criterion_group!(benches, filters, features, loss_grad, fusion);
criterion_main!(benches);
