//! Input builders shared by the benchmarks.

use lost_core::synthetic::{planted_object, random_feature_map, PatchRect};
use lost_core::{AttentionStack, CropDescriptor, FeatureKind, FeatureMap, ImageManifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A ViT-S/16-sized key map: 30x30 patches of dimension 384.
pub fn vit_small_keys(seed: u64) -> (FeatureMap, ImageManifest) {
    let fm = random_feature_map(&mut rng(seed), 30, 30, 384, FeatureKind::Key);
    (fm, ImageManifest::padded("bench", 480, 480, 16))
}

pub fn planted_keys(grid: usize, dim: usize) -> (FeatureMap, ImageManifest) {
    let mut r = rng(1);
    let (object, background) = lost_core::synthetic::opposed_pair(&mut r, dim);
    let rect = PatchRect { row: grid / 4, col: grid / 3, height: grid / 3, width: grid / 2 };
    let fm = planted_object(grid, grid, rect, &object, &background);
    let side = (grid * 16) as u32;
    (fm, ImageManifest::padded("bench", side, side, 16))
}

pub fn attention(heads: usize, grid: usize, seed: u64) -> AttentionStack {
    let mut r = rng(seed);
    let data = (0..heads * grid * grid).map(|_| r.random::<f32>()).collect();
    AttentionStack::new(heads, grid, grid, data).expect("valid stack")
}

pub fn cost_matrix(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..m).map(|_| r.random_range(0.0..100.0)).collect()).collect()
}

pub fn descriptors(count: usize, dim: usize, seed: u64) -> Vec<CropDescriptor> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| CropDescriptor {
            image_id: format!("{i:06}"),
            vector: (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect(),
        })
        .collect()
}
