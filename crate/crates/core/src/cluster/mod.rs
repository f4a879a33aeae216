//! Pseudo-labels for localized boxes: K-means over crop descriptors, and a
//! Hungarian cluster-to-class map used only when reporting against ground
//! truth.

mod hungarian;
mod kmeans;
mod retrieval;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use hungarian::{hungarian, Assignment};
pub use kmeans::{kmeans_points, KMeansConfig, KMeansFit, MAX_ITERATIONS, RELATIVE_TOLERANCE};
pub use retrieval::{cosine, retrieve_neighbors, DEFAULT_TAU};

use crate::datasets::{AnnotationSet, Detection};
use crate::error::{Error, Result};
use crate::evalmetrics::iou;
use crate::tensorio::CropDescriptor;

pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    pub inertia: f64,
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ClusterModel =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if let Some((id, &c)) = model.assignments.iter().find(|(_, &c)| c >= model.k) {
            return Err(Error::InvalidInput(format!("{id} assigned to cluster {c} >= k")));
        }
        Ok(model)
    }

    /// Copies of `preds` carrying their image's cluster id as label.
    pub fn label(&self, preds: &[Detection]) -> Vec<Detection> {
        preds
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.bbox.label = self.assignments.get(&d.image_id).copied();
                d
            })
            .collect()
    }
}

/// K-means over one descriptor per image.
pub fn kmeans(descriptors: &[CropDescriptor], k: usize, seed: u64) -> Result<ClusterModel> {
    let mut seen = BTreeSet::new();
    for d in descriptors {
        if !seen.insert(d.image_id.as_str()) {
            return Err(Error::DuplicateImage(d.image_id.clone()));
        }
    }
    let points: Vec<Vec<f64>> = descriptors
        .iter()
        .map(|d| d.vector.iter().map(|&v| f64::from(v)).collect())
        .collect();
    if points.is_empty() {
        return Err(Error::KTooLarge { k, points: 0 });
    }
    let fit = kmeans_points(&points, &KMeansConfig::new(k, seed))?;
    Ok(ClusterModel {
        k,
        seed,
        centroids: fit.centroids,
        assignments: descriptors
            .iter()
            .zip(&fit.labels)
            .map(|(d, &l)| (d.image_id.clone(), l))
            .collect(),
        inertia: fit.inertia,
        inertia_history: fit.inertia_history,
        iterations: fit.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterClassMap {
    pub pairs: BTreeMap<usize, String>,
    pub unmatched: Vec<usize>,
    /// Boxes whose cluster's class agrees with an overlapping ground truth.
    pub matched_hits: u64,
}

impl ClusterClassMap {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// `hits[c][j]`: boxes labeled `c` that overlap a ground-truth box of class
/// `classes[j]` with IoU >= `iou_thr`.
pub fn hit_counts(
    preds: &[Detection],
    k: usize,
    gt: &AnnotationSet,
    classes: &[String],
    iou_thr: f64,
) -> Result<Vec<Vec<u64>>> {
    let mut hits = vec![vec![0u64; classes.len()]; k];
    for det in preds {
        let Some(label) = det.bbox.label else { continue };
        if label >= k {
            return Err(Error::InvalidInput(format!(
                "{}: label {label} outside 0..{k}",
                det.image_id
            )));
        }
        let Some(ann) = gt.images.get(&det.image_id) else { continue };
        for (j, class) in classes.iter().enumerate() {
            let overlaps = ann
                .objects
                .iter()
                .any(|o| &o.class == class && iou(&det.bbox, &o.bbox) >= iou_thr);
            if overlaps {
                hits[label][j] += 1;
            }
        }
    }
    Ok(hits)
}

/// Maps clusters to classes by maximizing the total hit count. Clusters left
/// over when `k` exceeds the class count stay unmatched.
pub fn match_clusters(
    preds: &[Detection],
    k: usize,
    gt: &AnnotationSet,
    iou_thr: f64,
) -> Result<ClusterClassMap> {
    let classes = gt.classes();
    if classes.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let hits = hit_counts(preds, k, gt, &classes, iou_thr)?;
    let cost: Vec<Vec<f64>> = hits
        .iter()
        .map(|row| row.iter().map(|&h| -(h as f64)).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    let mut pairs = BTreeMap::new();
    let mut unmatched = Vec::new();
    let mut matched_hits = 0;
    for (c, col) in assignment.row_to_col.iter().enumerate() {
        match col {
            Some(j) => {
                pairs.insert(c, classes[*j].clone());
                matched_hits += hits[c][*j];
            }
            None => unmatched.push(c),
        }
    }
    Ok(ClusterClassMap {
        pairs,
        unmatched,
        matched_hits,
    })
}
