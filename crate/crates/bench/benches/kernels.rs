use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lost_core::{
    hungarian, kmeans, localize, retrieve_neighbors, select_head_box, FeatureSet, HeadSelection,
    LocalizeConfig, PatchGraph,
};
use lost_bench::{attention, cost_matrix, descriptors, planted_keys, vit_small_keys};

fn degrees(c: &mut Criterion) {
    let (fm, _) = vit_small_keys(0);
    c.bench_function("degree_map 900x384", |b| {
        b.iter(|| PatchGraph::dot(&fm).degree_map())
    });
}

fn lost_pipeline(c: &mut Criterion) {
    let (fm, manifest) = vit_small_keys(0);
    let set = FeatureSet::single(fm);
    c.bench_function("localize 900x384 k=100", |b| {
        b.iter(|| localize(&set, &manifest, &LocalizeConfig::default()).unwrap())
    });

    let (fm, manifest) = planted_keys(14, 64);
    let set = FeatureSet::single(fm);
    c.bench_function("localize planted 196x64", |b| {
        b.iter(|| localize(&set, &manifest, &LocalizeConfig::default()).unwrap())
    });
}

fn baseline(c: &mut Criterion) {
    let att = attention(6, 30, 3);
    let manifest = lost_core::ImageManifest::padded("bench", 480, 480, 16);
    c.bench_function("dinoseg haiou 6x900", |b| {
        b.iter(|| select_head_box(&att, &manifest, HeadSelection::Haiou).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let cost = cost_matrix(20, 20, 5);
    c.bench_function("hungarian 20x20", |b| b.iter(|| hungarian(&cost).unwrap()));

    let descs = descriptors(500, 384, 9);
    c.bench_function("kmeans 500x384 k=20", |b| {
        b.iter_batched(|| descs.clone(), |d| kmeans(&d, 20, 0).unwrap(), BatchSize::LargeInput)
    });
    c.bench_function("retrieve_neighbors 500x384 tau=10", |b| {
        b.iter(|| retrieve_neighbors(&descs, 10).unwrap())
    });
}

criterion_group!(benches, degrees, lost_pipeline, baseline, clustering);
criterion_main!(benches);
