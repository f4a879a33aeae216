use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use lost_core::datasets::write_predictions;
use lost_core::lost::DEFAULT_K;
use lost_core::{
    localize, read_attention_stack, read_feature_map, select_head_box, Detection, FeatureSet,
    HeadSelection, LocalizeConfig, SimilarityMode,
};

use crate::inputs::{box_every_image, positive, ImageInputs};

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Dataset manifest listing the image manifests.
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Output predictions, JSON Lines.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Features scored for the patch similarity.
    #[arg(long, default_value = "key", value_name = "key|query|value|sym-qk")]
    pub mode: SimilarityMode,
    /// Number of lowest-degree patches considered for seed expansion.
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    /// Skip images whose feature files are missing instead of failing.
    #[arg(long)]
    pub skip_missing: bool,
}

pub(crate) fn load_features(inputs: &ImageInputs, mode: SimilarityMode) -> anyhow::Result<FeatureSet> {
    let mut set = FeatureSet::default();
    for &kind in mode.required_kinds() {
        let path = inputs.require(kind.role())?;
        let fm = read_feature_map(&path).with_context(|| format!("reading {}", path.display()))?;
        if fm.kind() != kind {
            bail!(
                "{}: {} holds {} features, expected {kind}",
                inputs.manifest.image_id,
                path.display(),
                fm.kind()
            );
        }
        set.insert(fm);
    }
    Ok(set)
}

/// Localizes one box per image and writes them sorted by image id.
pub fn cmd_detect(args: &DetectArgs) -> anyhow::Result<Vec<Detection>> {
    let config = LocalizeConfig::with_mode(args.mode, args.k);
    let detections = box_every_image(&args.dataset, args.skip_missing, |inputs| {
        let features = load_features(inputs, args.mode)?;
        localize(&features, &inputs.manifest, &config)
            .with_context(|| format!("localizing {}", inputs.manifest.image_id))
    })?;
    write_predictions(&args.out, &detections)?;
    Ok(detections)
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    /// Dataset manifest listing the image manifests.
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Output predictions, JSON Lines.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Attention head, or a per-image head selection strategy.
    #[arg(long, default_value = "4", value_name = "0..5|bcc|haiou")]
    pub head: HeadSelection,
    /// Skip images whose attention files are missing instead of failing.
    #[arg(long)]
    pub skip_missing: bool,
}

/// DINO-seg boxes from the exported CLS attention maps.
pub fn cmd_baseline(args: &BaselineArgs) -> anyhow::Result<Vec<Detection>> {
    let detections = box_every_image(&args.dataset, args.skip_missing, |inputs| {
        let path = inputs.require("attention")?;
        let att = read_attention_stack(&path).with_context(|| format!("reading {}", path.display()))?;
        select_head_box(&att, &inputs.manifest, args.head)
            .with_context(|| format!("boxing {}", inputs.manifest.image_id))
    })?;
    write_predictions(&args.out, &detections)?;
    Ok(detections)
}
