//! Attention-threshold baseline: keep the `floor(0.6 N)` strongest CLS
//! attention entries of a head, box the largest 4-connected component.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::iou;
use crate::lost::{connected_components, patches_to_box, PatchMask, PixelBox};
use crate::tensorio::{AttentionStack, ImageManifest};

pub const DEFAULT_HEAD: usize = 4;

/// How one box is chosen among the per-head boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadSelection {
    Fixed(usize),
    /// Head with the biggest connected component.
    Bcc,
    /// Head whose box has the highest mean IoU with the other heads' boxes.
    Haiou,
}

impl Default for HeadSelection {
    fn default() -> Self {
        HeadSelection::Fixed(DEFAULT_HEAD)
    }
}

impl fmt::Display for HeadSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadSelection::Fixed(h) => write!(f, "{h}"),
            HeadSelection::Bcc => f.write_str("bcc"),
            HeadSelection::Haiou => f.write_str("haiou"),
        }
    }
}

impl FromStr for HeadSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bcc" => Ok(HeadSelection::Bcc),
            "haiou" => Ok(HeadSelection::Haiou),
            other => other
                .parse()
                .map(HeadSelection::Fixed)
                .map_err(|_| Error::InvalidInput(format!("unknown head selection {other:?}"))),
        }
    }
}

/// Number of entries kept by the binarization, `floor(0.6 N)`.
pub fn kept_count(n_patches: usize) -> usize {
    n_patches * 6 / 10
}

/// Sets the `floor(0.6 N)` largest values, descending value then ascending
/// index.
pub fn binarize(values: &[f32], grid_h: usize, grid_w: usize) -> Result<PatchMask> {
    let keep = kept_count(values.len());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut bits = vec![false; values.len()];
    for &p in &order[..keep] {
        bits[p] = true;
    }
    PatchMask::new(grid_h, grid_w, bits)
}

/// Largest component by patch count; ties go to the component with the
/// smallest index, which comes first in `connected_components` order.
pub fn largest_component(mask: &PatchMask) -> Option<Vec<usize>> {
    connected_components(mask)
        .into_iter()
        .fold(None, |best: Option<Vec<usize>>, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadBox {
    pub head: usize,
    pub component_size: usize,
    pub bbox: PixelBox,
}

fn head_result(att: &AttentionStack, head: usize, manifest: &ImageManifest) -> Result<HeadBox> {
    if head >= att.heads() {
        return Err(Error::InvalidInput(format!(
            "head {head} out of range for {} heads",
            att.heads()
        )));
    }
    manifest.check_grid(att.grid_h(), att.grid_w())?;
    let mask = binarize(att.head(head), att.grid_h(), att.grid_w())?;
    let component = largest_component(&mask).ok_or_else(|| {
        Error::EmptyMask(format!(
            "{}: floor(0.6 * {}) = 0 attention entries kept",
            manifest.image_id,
            att.n_patches()
        ))
    })?;
    let bbox = patches_to_box(&component, att.grid_w(), manifest)?;
    Ok(HeadBox {
        head,
        component_size: component.len(),
        bbox,
    })
}

pub fn head_box(att: &AttentionStack, head: usize, manifest: &ImageManifest) -> Result<PixelBox> {
    head_result(att, head, manifest).map(|r| r.bbox)
}

pub fn select_head_box(
    att: &AttentionStack,
    manifest: &ImageManifest,
    selection: HeadSelection,
) -> Result<PixelBox> {
    select_head(att, manifest, selection).map(|r| r.bbox)
}

/// Like [`select_head_box`] but also reports which head won.
pub fn select_head(
    att: &AttentionStack,
    manifest: &ImageManifest,
    selection: HeadSelection,
) -> Result<HeadBox> {
    if let HeadSelection::Fixed(head) = selection {
        return head_result(att, head, manifest);
    }
    let per_head = (0..att.heads())
        .map(|h| head_result(att, h, manifest))
        .collect::<Result<Vec<_>>>()?;
    let winner = match selection {
        HeadSelection::Fixed(_) => unreachable!(),
        HeadSelection::Bcc => argmax_first(per_head.iter().map(|r| r.component_size as f64)),
        HeadSelection::Haiou => {
            let others = (per_head.len() - 1).max(1) as f64;
            argmax_first(per_head.iter().enumerate().map(|(i, a)| {
                per_head
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| iou(&a.bbox, &b.bbox))
                    .sum::<f64>()
                    / others
            }))
        }
    };
    Ok(per_head.into_iter().nth(winner).expect("at least one head"))
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
