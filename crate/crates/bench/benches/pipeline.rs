use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use imser_core::synth::{word_scene, SceneParams};
use imser_core::{
    build_component_tree, detect_msers, extract_imsers, forward, group_msers, Detector, ImserParams, MserParams, Patch,
    PipelineConfig, WeightSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(width: usize, height: usize) -> imser_core::GrayImage {
    word_scene(1, &SceneParams { width, height, ..SceneParams::default() }).image
}

fn stages(c: &mut Criterion) {
    let img = scene(640, 480);
    let params = MserParams::default();
    c.bench_function("component_tree_640x480", |b| b.iter(|| build_component_tree(&img)));

    let tree = build_component_tree(&img);
    c.bench_function("mser_640x480", |b| b.iter(|| detect_msers(&tree, &params)));

    let msers = detect_msers(&tree, &params);
    c.bench_function("group_msers_640x480", |b| {
        b.iter_batched(|| msers.clone(), |m| group_msers(m).unwrap(), BatchSize::SmallInput)
    });

    let trees = group_msers(msers).unwrap();
    let imser = ImserParams::default();
    c.bench_function("extract_imsers_640x480", |b| {
        b.iter(|| trees.iter().map(|t| extract_imsers(t, &imser).len()).sum::<usize>())
    });
}

fn cnn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = WeightSet::from_fn(|| rng.gen_range(-0.05..0.05));
    let patch = Patch::from_values((0..1024).map(|i| ((i % 37) as f32 - 18.0) / 10.0).collect()).unwrap();
    c.bench_function("cnn_forward", |b| b.iter(|| forward(&patch, &w)));
}

fn end_to_end(c: &mut Criterion) {
    let img = scene(200, 80);
    let det = Detector::new(PipelineConfig::default()).unwrap();
    c.bench_function("detect_200x80_heuristic", |b| b.iter(|| det.detect(&img).unwrap()));
}

criterion_group!(benches, stages, cnn, end_to_end);
criterion_main!(benches);
