//! Synthetic feature maps with a planted object, for tests, benchmarks and
//! demo datasets.

use rand::Rng;

use crate::lost::PixelBox;
use crate::tensorio::{FeatureKind, FeatureMap, ImageManifest};

/// Axis-aligned block of patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchRect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.height).contains(&row)
            && (self.col..self.col + self.width).contains(&col)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Pixel box of the block, clipped to the manifest's image.
    pub fn pixel_box(&self, manifest: &ImageManifest) -> PixelBox {
        let p = f64::from(manifest.patch_size);
        let (iw, ih) = (f64::from(manifest.image_w), f64::from(manifest.image_h));
        PixelBox::new(
            (self.col as f64 * p).min(iw),
            (self.row as f64 * p).min(ih),
            ((self.col + self.width) as f64 * p).min(iw),
            ((self.row + self.height) as f64 * p).min(ih),
        )
    }
}

/// Object patches carry `object`, every other patch `background`.
pub fn planted_object(
    grid_h: usize,
    grid_w: usize,
    rect: PatchRect,
    object: &[f32],
    background: &[f32],
) -> FeatureMap {
    assert_eq!(object.len(), background.len());
    let mut data = Vec::with_capacity(grid_h * grid_w * object.len());
    for r in 0..grid_h {
        for c in 0..grid_w {
            data.extend_from_slice(if rect.contains(r, c) { object } else { background });
        }
    }
    FeatureMap::new(grid_h, grid_w, object.len(), FeatureKind::Key, data)
        .expect("planted map is well formed")
}

/// Gradient strength of [`graded_object`]; its square stays below 2 so that
/// the seeds of a 3-column object still pull in the far column.
pub const GRADE: f32 = 1.375;

/// Object whose patches are `(1, GRADE * t, 0)` with `t` running from -1 on
/// the left column to +1 on the right one; the background is `(-1, 0, tilt)`.
///
/// Every object patch correlates positively with `(1, 0, 0)`, but the two end
/// columns anti-correlate, so a lone seed on one end cannot reach the other.
/// Needs `rect.width >= 2`.
pub fn graded_object(grid_h: usize, grid_w: usize, rect: PatchRect, tilt: f32, scale: f32) -> FeatureMap {
    assert!(rect.width >= 2, "graded object needs two columns");
    let mut data = Vec::with_capacity(grid_h * grid_w * 3);
    for r in 0..grid_h {
        for c in 0..grid_w {
            let f = if rect.contains(r, c) {
                let t = -1.0 + 2.0 * (c - rect.col) as f32 / (rect.width - 1) as f32;
                [1.0, GRADE * t, 0.0]
            } else {
                [-1.0, 0.0, tilt]
            };
            data.extend(f.iter().map(|v| v * scale));
        }
    }
    FeatureMap::new(grid_h, grid_w, 3, FeatureKind::Key, data).expect("graded map is well formed")
}

/// Uniform random features in `[-1, 1)`.
pub fn random_feature_map(rng: &mut impl Rng, grid_h: usize, grid_w: usize, dim: usize, kind: FeatureKind) -> FeatureMap {
    let data = (0..grid_h * grid_w * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    FeatureMap::new(grid_h, grid_w, dim, kind, data).expect("random map is well formed")
}

/// Random unit-ish `object` and a `background` with negative dot product to it.
pub fn opposed_pair(rng: &mut impl Rng, dim: usize) -> (Vec<f32>, Vec<f32>) {
    loop {
        let object: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let background: Vec<f32> = object
            .iter()
            .map(|v| -v + rng.random_range(-0.3f32..0.3))
            .collect();
        let dot: f64 = object.iter().zip(&background).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        let self_dot: f64 = object.iter().map(|a| f64::from(*a) * f64::from(*a)).sum();
        if dot < -1e-3 && self_dot > 1e-3 {
            return (object, background);
        }
    }
}
