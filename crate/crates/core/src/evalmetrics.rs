//! IoU, CorLoc, AP, odAP and CorRet.
//!
//! AP uses all-point interpolation: the area under the monotone precision
//! envelope over recall. Predictions are ranked by descending score, then
//! image id, then input position; each ground-truth box can be matched once,
//! preferring the unmatched box of highest IoU.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::{AnnotationSet, Detection};
use crate::error::{Error, Result};
use crate::lost::PixelBox;

pub const CORLOC_IOU: f64 = 0.5;

/// Intersection over union of two half-open boxes; 0 when the union is empty.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorlocResult {
    pub percent: f64,
    pub hits: usize,
    /// Ground-truth images with at least one box.
    pub evaluated: usize,
    /// Evaluated images without a prediction; they count as misses.
    pub missing_predictions: usize,
    /// Predictions for images without any ground-truth box.
    pub excluded_no_gt: usize,
}

/// Class-agnostic CorLoc: the share of images whose single predicted box has
/// IoU >= 0.5 with any ground-truth box of that image.
pub fn corloc(preds: &[Detection], gt: &AnnotationSet) -> Result<CorlocResult> {
    let mut by_image: BTreeMap<&str, &PixelBox> = BTreeMap::new();
    let mut excluded = 0;
    for det in preds {
        let has_gt = gt
            .images
            .get(&det.image_id)
            .is_some_and(|a| !a.objects.is_empty());
        if !has_gt {
            log::debug!("{}: no ground-truth box, prediction excluded", det.image_id);
            excluded += 1;
            continue;
        }
        if by_image.insert(&det.image_id, &det.bbox).is_some() {
            return Err(Error::InvalidInput(format!(
                "CorLoc expects one prediction per image, {} has several",
                det.image_id
            )));
        }
    }

    let (mut hits, mut evaluated, mut missing) = (0, 0, 0);
    for (id, ann) in gt.images.iter().filter(|(_, a)| !a.objects.is_empty()) {
        evaluated += 1;
        match by_image.get(id.as_str()) {
            Some(pred) => {
                if ann.objects.iter().any(|o| iou(pred, &o.bbox) >= CORLOC_IOU) {
                    hits += 1;
                }
            }
            None => missing += 1,
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} predictions excluded: their images have no ground-truth box");
    }
    if missing > 0 {
        log::warn!("{missing} evaluated images have no prediction");
    }
    let percent = if evaluated == 0 {
        0.0
    } else {
        100.0 * hits as f64 / evaluated as f64
    };
    Ok(CorlocResult {
        percent,
        hits,
        evaluated,
        missing_predictions: missing,
        excluded_no_gt: excluded,
    })
}

/// Ranking order: descending score, then image id, then input index.
fn ranking(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .bbox
            .score
            .total_cmp(&preds[a].bbox.score)
            .then_with(|| preds[a].image_id.cmp(&preds[b].image_id))
            .then(a.cmp(&b))
    });
    order
}

/// Area under the precision envelope of a ranked TP/FP sequence.
pub fn all_point_ap(true_positive: &[bool], n_positives: usize) -> f64 {
    if n_positives == 0 || true_positive.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(true_positive.len());
    let mut precision = Vec::with_capacity(true_positive.len());
    let mut tp = 0usize;
    for (i, &hit) in true_positive.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / n_positives as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// AP of `preds` against the ground truth, restricted to `class` when given.
///
/// Predictions are taken as-is: filtering them down to one class is the
/// caller's job.
pub fn average_precision(
    preds: &[Detection],
    gt: &AnnotationSet,
    class: Option<&str>,
    iou_thr: f64,
) -> f64 {
    let gt_boxes: BTreeMap<&str, Vec<&PixelBox>> = gt
        .images
        .iter()
        .map(|(id, ann)| {
            let boxes = ann
                .objects
                .iter()
                .filter(|o| class.is_none_or(|c| o.class == c))
                .map(|o| &o.bbox)
                .collect();
            (id.as_str(), boxes)
        })
        .collect();
    let n_positives: usize = gt_boxes.values().map(Vec::len).sum();

    let mut matched: BTreeMap<&str, Vec<bool>> = gt_boxes
        .iter()
        .map(|(id, boxes)| (*id, vec![false; boxes.len()]))
        .collect();
    let hits: Vec<bool> = ranking(preds)
        .into_iter()
        .map(|i| {
            let det = &preds[i];
            let (Some(boxes), Some(used)) = (
                gt_boxes.get(det.image_id.as_str()),
                matched.get_mut(det.image_id.as_str()),
            ) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in boxes.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let o = iou(&det.bbox, g);
                if o >= iou_thr && best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    all_point_ap(&hits, n_positives)
}

/// Each image's `n` highest-scored predictions (input order on ties).
fn top_n_per_image(preds: &[Detection], n: usize) -> Vec<Detection> {
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in preds.iter().enumerate() {
        by_image.entry(&d.image_id).or_default().push(i);
    }
    let mut out = Vec::new();
    for idx in by_image.values_mut() {
        idx.sort_by(|&a, &b| preds[b].bbox.score.total_cmp(&preds[a].bbox.score).then(a.cmp(&b)));
        out.extend(idx.iter().take(n).map(|&i| preds[i].clone()));
    }
    out
}

/// Largest number of ground-truth boxes in one image.
pub fn max_gt_per_image(gt: &AnnotationSet) -> usize {
    gt.images.values().map(|a| a.objects.len()).max().unwrap_or(0)
}

/// Class-agnostic AP for each per-image cap `n = 1..=M`, where `M` is the
/// largest ground-truth count of any image.
pub fn od_ap_per_cap(preds: &[Detection], gt: &AnnotationSet, iou_thr: f64) -> Vec<f64> {
    (1..=max_gt_per_image(gt))
        .map(|n| average_precision(&top_n_per_image(preds, n), gt, None, iou_thr))
        .collect()
}

/// Mean of [`od_ap_per_cap`], as a fraction in `[0, 1]`.
pub fn od_ap(preds: &[Detection], gt: &AnnotationSet, iou_thr: f64) -> f64 {
    let per_cap = od_ap_per_cap(preds, gt, iou_thr);
    if per_cap.is_empty() {
        0.0
    } else {
        per_cap.iter().sum::<f64>() / per_cap.len() as f64
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect()
}

/// odAP averaged over several IoU thresholds.
pub fn od_ap_multi(preds: &[Detection], gt: &AnnotationSet, thresholds: &[f64]) -> f64 {
    if thresholds.is_empty() {
        return 0.0;
    }
    thresholds.iter().map(|&t| od_ap(preds, gt, t)).sum::<f64>() / thresholds.len() as f64
}

pub fn od_ap_report(preds: &[Detection], gt: &AnnotationSet) -> EvalReport {
    let mut report = EvalReport::default();
    report.metrics.insert("odAP50".into(), 100.0 * od_ap(preds, gt, 0.5));
    report
        .metrics
        .insert("odAP@[50-95]".into(), 100.0 * od_ap_multi(preds, gt, &coco_thresholds()));
    report.counts.insert("images".into(), gt.len());
    report.counts.insert("gt_boxes".into(), gt.n_boxes());
    report.counts.insert("predictions".into(), preds.len());
    report.counts.insert("max_gt_per_image".into(), max_gt_per_image(gt));
    report
}

/// Per-class AP after renaming cluster labels to classes. Predictions with no
/// label, or whose cluster has no class, are ignored.
pub fn class_aware_ap(
    preds: &[Detection],
    cluster_to_class: &BTreeMap<usize, String>,
    gt: &AnnotationSet,
    iou_thr: f64,
) -> EvalReport {
    let mut report = EvalReport::default();
    let classes = gt.classes();
    for class in &classes {
        let mine: Vec<Detection> = preds
            .iter()
            .filter(|d| {
                d.bbox
                    .label
                    .and_then(|l| cluster_to_class.get(&l))
                    .is_some_and(|c| c == class)
            })
            .cloned()
            .collect();
        let ap = average_precision(&mine, gt, Some(class), iou_thr);
        report.per_class.insert(class.clone(), 100.0 * ap);
    }
    let mean = if classes.is_empty() {
        0.0
    } else {
        report.per_class.values().sum::<f64>() / classes.len() as f64
    };
    report.metrics.insert(format!("AP{}", (iou_thr * 100.0).round()), mean);
    report.counts.insert("images".into(), gt.len());
    report.counts.insert("classes".into(), classes.len());
    report.counts.insert("predictions".into(), preds.len());
    report
}

/// Mean share, in percent, of each image's retrieved neighbors that share
/// at least one ground-truth class with it.
pub fn corret(
    neighbors: &BTreeMap<String, Vec<String>>,
    gt_classes: &BTreeMap<String, BTreeSet<String>>,
    tau: usize,
) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(Error::InvalidInput("no neighbor lists".into()));
    }
    if tau == 0 {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    let classes_of = |id: &str| {
        gt_classes
            .get(id)
            .ok_or_else(|| Error::MissingClassInfo(id.to_owned()))
    };
    let mut total = 0.0;
    for (id, list) in neighbors {
        if list.len() != tau {
            return Err(Error::InvalidInput(format!(
                "{id} has {} neighbors, expected {tau}",
                list.len()
            )));
        }
        let mine = classes_of(id)?;
        let mut shared = 0usize;
        for other in list {
            if !classes_of(other)?.is_disjoint(mine) {
                shared += 1;
            }
        }
        total += shared as f64 / tau as f64;
    }
    Ok(100.0 * total / neighbors.len() as f64)
}

/// Named metric values in percent, with optional per-class breakdown.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<String, f64>,
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text table: one row of metric values, then a per-class row when
    /// present (classes as columns, mean last).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        write_row_table(&mut out, &self.metrics);
        if !self.per_class.is_empty() {
            out.push('\n');
            write_row_table(&mut out, &self.per_class);
        }
        if !self.counts.is_empty() {
            out.push('\n');
            for (k, v) in &self.counts {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        out
    }
}

fn write_row_table(out: &mut String, cells: &BTreeMap<String, f64>) {
    let values: Vec<String> = cells.values().map(|v| format!("{v:.1}")).collect();
    let widths: Vec<usize> = cells
        .keys()
        .zip(&values)
        .map(|(k, v)| k.len().max(v.len()))
        .collect();
    let line = |items: Vec<&str>| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let _ = writeln!(out, "{}", line(cells.keys().map(String::as_str).collect()));
    let _ = writeln!(
        out,
        "{}",
        widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-")
    );
    let _ = writeln!(out, "{}", line(values.iter().map(String::as_str).collect()));
}
