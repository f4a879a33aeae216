//! Single-object localization from patch similarities.
//!
//! The pipeline picks the lowest-degree patch as the initial seed, expands it
//! to the low-degree patches that correlate with it, marks every patch whose
//! summed similarity to the seeds is non-negative, and boxes the 4-connected
//! component of that mask which contains the initial seed.
//!
//! All ties resolve to the smallest linear patch index, so the whole pipeline
//! is a pure function of its inputs.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchgraph::{DegreeMap, FeatureSet, PatchGraph, SimilarityMode};
use crate::tensorio::ImageManifest;

pub const DEFAULT_K: usize = 100;

/// Axis-aligned box in original-image pixels, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl PixelBox {
    /// Unlabeled box with score 1.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            score: 1.0,
            label: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &PixelBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Checks `0 <= min < max <= size` on both axes.
    pub fn validate(&self, image_w: f64, image_h: f64) -> Result<()> {
        let ok = [self.x_min, self.y_min, self.x_max, self.y_max, self.score]
            .iter()
            .all(|v| v.is_finite())
            && 0.0 <= self.x_min
            && self.x_min < self.x_max
            && self.x_max <= image_w
            && 0.0 <= self.y_min
            && self.y_min < self.y_max
            && self.y_max <= image_h;
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateBox(format!(
                "{self:?} not inside a {image_w}x{image_h} image"
            )))
        }
    }
}

/// Seed selection and expansion state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    /// The initial seed `p*`.
    pub initial: usize,
    /// Expansion budget after clamping to the patch count.
    pub budget: usize,
    /// The `budget` lowest-degree patches, in (degree, index) order.
    pub candidates: Vec<usize>,
    /// Candidates correlating non-negatively with `p*`, ascending.
    pub seeds: Vec<usize>,
}

/// Binary patch mask on the patch grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchMask {
    pub grid_h: usize,
    pub grid_w: usize,
    pub bits: Vec<bool>,
}

impl PatchMask {
    pub fn new(grid_h: usize, grid_w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid_h * grid_w {
            return Err(Error::SizeMismatch(format!(
                "{grid_h}x{grid_w} mask needs {} bits, got {}",
                grid_h * grid_w,
                bits.len()
            )));
        }
        Ok(Self {
            grid_h,
            grid_w,
            bits,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.bits.len()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Global argmin of the degrees, smallest index on ties.
pub fn select_seed(dm: &DegreeMap) -> usize {
    dm.degrees
        .iter()
        .enumerate()
        .min_by_key(|&(p, &d)| (d, p))
        .map_or(0, |(p, _)| p)
}

/// Patches sorted by (degree, index).
fn degree_order(dm: &DegreeMap) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dm.n_patches()).collect();
    order.sort_unstable_by_key(|&p| (dm.degrees[p], p));
    order
}

pub fn expand_seed(
    graph: &PatchGraph<'_>,
    dm: &DegreeMap,
    p_star: usize,
    k: usize,
) -> Result<SeedSet> {
    let n = graph.n_patches();
    if dm.n_patches() != n {
        return Err(Error::GeometryMismatch(format!(
            "degree map has {} patches, features have {n}",
            dm.n_patches()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("expansion budget k must be at least 1".into()));
    }
    if p_star >= n {
        return Err(Error::IndexOutOfRange { index: p_star, len: n });
    }
    let budget = k.min(n);
    let mut candidates = degree_order(dm);
    candidates.truncate(budget);
    if !candidates.contains(&p_star) {
        return Err(Error::InvalidInput(format!(
            "initial seed {p_star} is not among the {budget} lowest-degree patches"
        )));
    }
    let mut seeds: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&q| q == p_star || graph.adjacent(q, p_star))
        .collect();
    seeds.sort_unstable();
    Ok(SeedSet {
        initial: p_star,
        budget,
        candidates,
        seeds,
    })
}

/// Marks `q` when the summed similarity of `q` to every seed is non-negative.
///
/// Seeds are summed in ascending index order. The initial seed is always
/// marked; for dot-product scores this already follows from the seed filter.
pub fn build_mask(graph: &PatchGraph<'_>, seeds: &SeedSet) -> Result<PatchMask> {
    if seeds.seeds.is_empty() {
        return Err(Error::InvalidInput("seed set is empty".into()));
    }
    let n = graph.n_patches();
    if let Some(&bad) = seeds.seeds.iter().find(|&&s| s >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let mut bits: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|q| {
            let total = seeds
                .seeds
                .iter()
                .fold(0.0f64, |acc, &s| acc + graph.score(q, s));
            total >= 0.0
        })
        .collect();
    bits[seeds.initial] = true;
    PatchMask::new(graph.grid_h(), graph.grid_w(), bits)
}

/// 4-connected components of the set bits, each sorted ascending, ordered by
/// their smallest index.
pub fn connected_components(mask: &PatchMask) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.n_patches()];
    let mut components = Vec::new();
    for start in 0..mask.n_patches() {
        if mask.bits[start] && !seen[start] {
            components.push(flood(mask, start, &mut seen));
        }
    }
    components
}

/// The component containing `p`, or `None` if `p` is unset.
pub fn component_containing(mask: &PatchMask, p: usize) -> Option<Vec<usize>> {
    if !mask.bits.get(p).copied().unwrap_or(false) {
        return None;
    }
    let mut seen = vec![false; mask.n_patches()];
    Some(flood(mask, p, &mut seen))
}

fn flood(mask: &PatchMask, start: usize, seen: &mut [bool]) -> Vec<usize> {
    let (h, w) = (mask.grid_h, mask.grid_w);
    let mut out = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(p) = queue.pop_front() {
        out.push(p);
        let (r, c) = (p / w, p % w);
        let mut visit = |q: usize| {
            if mask.bits[q] && !seen[q] {
                seen[q] = true;
                queue.push_back(q);
            }
        };
        if r > 0 {
            visit(p - w);
        }
        if r + 1 < h {
            visit(p + w);
        }
        if c > 0 {
            visit(p - 1);
        }
        if c + 1 < w {
            visit(p + 1);
        }
    }
    out.sort_unstable();
    out
}

/// Pixel box covering a set of patches, clipped to the unpadded image.
pub fn patches_to_box(
    patches: &[usize],
    grid_w: usize,
    manifest: &ImageManifest,
) -> Result<PixelBox> {
    let first = *patches
        .first()
        .ok_or_else(|| Error::DegenerateBox("no patches to box".into()))?;
    let (mut r0, mut r1, mut c0, mut c1) = (first / grid_w, first / grid_w, first % grid_w, first % grid_w);
    for &p in patches {
        let (r, c) = (p / grid_w, p % grid_w);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let size = f64::from(manifest.patch_size);
    let (iw, ih) = (f64::from(manifest.image_w), f64::from(manifest.image_h));
    let bbox = PixelBox::new(
        (c0 as f64 * size).min(iw),
        (r0 as f64 * size).min(ih),
        ((c1 + 1) as f64 * size).min(iw),
        ((r1 + 1) as f64 * size).min(ih),
    );
    if bbox.x_min >= bbox.x_max || bbox.y_min >= bbox.y_max {
        return Err(Error::DegenerateBox(format!(
            "{}: patch rows {r0}..={r1}, cols {c0}..={c1} lie entirely in padding",
            manifest.image_id
        )));
    }
    Ok(bbox)
}

/// Box of the mask component containing `p_star`.
pub fn extract_box(mask: &PatchMask, p_star: usize, manifest: &ImageManifest) -> Result<PixelBox> {
    manifest.check_grid(mask.grid_h, mask.grid_w)?;
    let component = component_containing(mask, p_star).ok_or_else(|| {
        Error::EmptyMask(format!("initial seed {p_star} is not set in the mask"))
    })?;
    patches_to_box(&component, mask.grid_w, manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    /// Similarity used for degrees and the initial seed.
    pub seed_mode: SimilarityMode,
    /// Similarity used for seed expansion and the mask.
    pub expansion_mode: SimilarityMode,
    pub k: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self::with_mode(SimilarityMode::default(), DEFAULT_K)
    }
}

impl LocalizeConfig {
    pub fn with_mode(mode: SimilarityMode, k: usize) -> Self {
        Self {
            seed_mode: mode,
            expansion_mode: mode,
            k,
        }
    }
}

/// Every intermediate of one localization, for rendering and debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub degrees: DegreeMap,
    pub seed_set: SeedSet,
    pub mask: PatchMask,
    pub component: Vec<usize>,
    pub bbox: PixelBox,
    /// Box obtained from the initial seed alone, before expansion.
    pub seed_only_box: PixelBox,
}

pub fn localize(
    features: &FeatureSet,
    manifest: &ImageManifest,
    config: &LocalizeConfig,
) -> Result<PixelBox> {
    localize_detailed(features, manifest, config).map(|l| l.bbox)
}

pub fn localize_detailed(
    features: &FeatureSet,
    manifest: &ImageManifest,
    config: &LocalizeConfig,
) -> Result<Localization> {
    let seed_graph = features.graph(config.seed_mode)?;
    let expansion_graph = features.graph(config.expansion_mode)?;
    for graph in [&seed_graph, &expansion_graph] {
        manifest.check_grid(graph.grid_h(), graph.grid_w())?;
    }
    let n = seed_graph.n_patches();
    if config.k > n {
        log::warn!(
            "{}: k = {} exceeds the {n} patches, clamping",
            manifest.image_id,
            config.k
        );
    }

    let degrees = seed_graph.degree_map();
    let p_star = select_seed(&degrees);
    log::debug!(
        "{}: seed {p_star} degree {} (min {}, max {})",
        manifest.image_id,
        degrees.degrees[p_star],
        degrees.degrees.iter().min().unwrap_or(&0),
        degrees.degrees.iter().max().unwrap_or(&0),
    );

    let seed_set = expand_seed(&expansion_graph, &degrees, p_star, config.k)?;
    let mask = build_mask(&expansion_graph, &seed_set)?;
    let component = component_containing(&mask, p_star)
        .ok_or_else(|| Error::EmptyMask(format!("initial seed {p_star} not set")))?;
    let bbox = patches_to_box(&component, mask.grid_w, manifest)?;

    let lone = expand_seed(&expansion_graph, &degrees, p_star, 1)?;
    let seed_only_box = extract_box(&build_mask(&expansion_graph, &lone)?, p_star, manifest)?;

    Ok(Localization {
        degrees,
        seed_set,
        mask,
        component,
        bbox,
        seed_only_box,
    })
}
