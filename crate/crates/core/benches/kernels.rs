use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsk_core::entailment::EntailmentConfig;
use lsk_core::hyperbolicity::{delta_from_matrix, maxmin_product_with, pairwise_distances_with, Metric};
use lsk_core::maskhead::{maskhead_loss_and_grad, segments_from_labels, train_maskhead, MaskTrainConfig};
use lsk_core::segtoy::{generate_scene, loss_and_grad, prepare, targets_from_labels, EncoderParams, SceneConfig, TrainConfig};
use lsk_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn points(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-2.0..2.0)).collect()).collect()
}

fn distances(c: &mut Criterion) {
    let pts = points(512, 8);
    let mut g = c.benchmark_group("pairwise_distances");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 512), |b| b.iter(|| pairwise_distances_with(exec, &pts, Metric::Lorentz).unwrap()));
    }
    g.finish();
}

fn maxmin(c: &mut Criterion) {
    let pts = points(256, 8);
    let d = pairwise_distances_with(Exec::Sequential, &pts, Metric::Lorentz).unwrap();
    let n = d.n();
    let mut g = c.benchmark_group("maxmin");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(format!("{name}/product"), n), |b| {
            b.iter(|| maxmin_product_with(exec, d.as_slice(), d.as_slice(), n).unwrap())
        });
        g.bench_function(BenchmarkId::new(format!("{name}/delta"), n), |b| b.iter(|| delta_from_matrix(exec, &d, 0).unwrap()));
    }
    g.finish();
}

fn training_steps(c: &mut Criterion) {
    let scene = generate_scene(&SceneConfig::new(3, 3, 64, 64, 0.0, 42)).unwrap();
    let (_, protos) = prepare(&scene, 8, &EntailmentConfig::default()).unwrap();
    let targets = targets_from_labels(&scene);
    let cfg = TrainConfig::default();
    let params = EncoderParams::init(scene.d_in, cfg.hidden, 8, cfg.seed).unwrap();
    let mask_cfg = MaskTrainConfig { epochs: 1, ..MaskTrainConfig::default() };
    let mask = train_maskhead(Exec::Sequential, &scene, &protos, &mask_cfg).unwrap().params;
    let segments = segments_from_labels(&scene.labels, scene.classes());

    let mut g = c.benchmark_group("training_step");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("pixel_loss_and_grad", name), |b| {
            b.iter(|| loss_and_grad(exec, &params, &scene, &targets, &protos, &cfg, true).unwrap())
        });
        g.bench_function(BenchmarkId::new("maskhead_loss_and_grad", name), |b| {
            b.iter(|| maskhead_loss_and_grad(exec, &mask, &protos, &scene, &segments, &mask_cfg.head, true).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, distances, maxmin, training_steps);
criterion_main!(benches);
