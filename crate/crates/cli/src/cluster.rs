use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use lost_core::cluster::{ClusterClassMap, DEFAULT_TAU, MATCH_IOU};
use lost_core::datasets::{read_predictions, write_predictions};
use lost_core::{kmeans, match_clusters, read_crop_descriptors, retrieve_neighbors, ClusterModel};

use crate::inputs::{write_text, GroundTruthArgs};

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// Predictions to label, JSON Lines.
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,
    /// Crop descriptors of the predicted boxes, one per image.
    #[arg(long, value_name = "FILE")]
    pub descriptors: PathBuf,
    /// Cluster count; defaults to the ground-truth class count.
    #[arg(long, value_name = "K")]
    pub clusters: Option<usize>,
    /// Seed of the K-means initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Labeled predictions, JSON Lines.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Fitted model, JSON.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Cluster-to-class map from Hungarian matching, JSON (needs ground truth).
    #[arg(long, value_name = "FILE")]
    pub map: Option<PathBuf>,
    #[command(flatten)]
    pub ground_truth: GroundTruthArgs,
}

pub fn cmd_cluster(args: &ClusterArgs) -> anyhow::Result<(ClusterModel, Option<ClusterClassMap>)> {
    let gt = args.ground_truth.load()?;
    if args.map.is_some() && gt.is_none() {
        bail!("--map needs ground truth (--voc-dir or --coco)");
    }
    let k = match (args.clusters, &gt) {
        (Some(k), _) => k,
        (None, Some(gt)) => gt.classes().len(),
        (None, None) => bail!("pass --clusters, or ground truth to default it to the class count"),
    };

    let descriptors = read_crop_descriptors(&args.descriptors)
        .with_context(|| format!("reading {}", args.descriptors.display()))?;
    let model = kmeans(&descriptors, k, args.seed)
        .with_context(|| format!("clustering {} descriptors", descriptors.len()))?;
    log::info!(
        "k-means: k = {k}, {} iterations, inertia {:.6}",
        model.iterations,
        model.inertia
    );

    let preds = read_predictions(&args.predictions)?;
    let labeled = model.label(&preds);
    let unlabeled = labeled.iter().filter(|d| d.bbox.label.is_none()).count();
    if unlabeled > 0 {
        log::warn!("{unlabeled} predictions have no descriptor and stay unlabeled");
    }
    write_predictions(&args.out, &labeled)?;
    write_text(&args.model, &model.to_json()?)?;

    let map = match &gt {
        Some(gt) => {
            let map = match_clusters(&labeled, k, gt, MATCH_IOU)?;
            log::info!(
                "matched {} clusters, {} unmatched, {} hits",
                map.pairs.len(),
                map.unmatched.len(),
                map.matched_hits
            );
            if let Some(path) = &args.map {
                write_text(path, &map.to_json()?)?;
            }
            Some(map)
        }
        None => None,
    };
    Ok((model, map))
}

#[derive(Debug, Clone, Args)]
pub struct RetrieveArgs {
    /// Crop descriptors, one per image.
    #[arg(long, value_name = "FILE")]
    pub descriptors: PathBuf,
    /// Neighbors kept per image.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: usize,
    /// Neighbor lists, JSON object keyed by image id.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let descriptors = read_crop_descriptors(&args.descriptors)
        .with_context(|| format!("reading {}", args.descriptors.display()))?;
    let neighbors = retrieve_neighbors(&descriptors, args.tau)?;
    let mut text = serde_json::to_string_pretty(&neighbors)?;
    text.push('\n');
    write_text(&args.out, &text)?;
    Ok(neighbors)
}
