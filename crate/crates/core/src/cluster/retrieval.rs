use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::patchgraph::dot;
use crate::tensorio::CropDescriptor;

pub const DEFAULT_TAU: usize = 10;

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let denom = dot(a, a).sqrt() * dot(b, b).sqrt();
    (denom > 0.0).then(|| dot(a, b) / denom)
}

/// Higher similarity first, undefined similarities last.
fn by_similarity(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// For every image, the `tau` other images whose descriptors are most
/// cosine-similar to its own. Ties go to the smaller image id.
pub fn retrieve_neighbors(
    descriptors: &[CropDescriptor],
    tau: usize,
) -> Result<BTreeMap<String, Vec<String>>> {
    if descriptors.len() < tau + 1 {
        return Err(Error::TooFewImages {
            needed: tau + 1,
            found: descriptors.len(),
        });
    }
    let dim = descriptors[0].vector.len();
    let mut sorted: Vec<&CropDescriptor> = descriptors.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for pair in sorted.windows(2) {
        if pair[0].image_id == pair[1].image_id {
            return Err(Error::DuplicateImage(pair[0].image_id.clone()));
        }
    }
    if let Some(bad) = sorted.iter().find(|d| d.vector.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.vector.len(),
        });
    }

    let mut out = BTreeMap::new();
    for (i, me) in sorted.iter().enumerate() {
        let mut others: Vec<(Option<f64>, &str)> = sorted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| (cosine(&me.vector, &o.vector), o.image_id.as_str()))
            .collect();
        others.sort_by(|a, b| by_similarity(a.0, b.0).then_with(|| a.1.cmp(b.1)));
        out.insert(
            me.image_id.clone(),
            others.into_iter().take(tau).map(|(_, id)| id.to_owned()).collect(),
        );
    }
    Ok(out)
}
