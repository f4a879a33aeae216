use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use lost_core::cluster::{ClusterClassMap, DEFAULT_TAU};
use lost_core::datasets::read_predictions;
use lost_core::evalmetrics::{class_aware_ap, od_ap_report};
use lost_core::{average_precision, corloc, corret, Detection, EvalReport};

use crate::inputs::{write_text, GroundTruthArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Share of images whose box overlaps a ground-truth box (IoU >= 0.5).
    Corloc,
    /// Object-discovery AP at IoU 0.5 and averaged over 0.50:0.95.
    Odap,
    /// Average precision; class-aware when a cluster-to-class map is given.
    Ap,
    /// Share of retrieved neighbors sharing a ground-truth class.
    Corret,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Predictions, JSON Lines (corloc, odap, ap).
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Neighbor lists written by `retrieve` (corret).
    #[arg(long, value_name = "FILE")]
    pub neighbors: Option<PathBuf>,
    #[command(flatten)]
    pub ground_truth: GroundTruthArgs,
    /// IoU threshold of the ap metric.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Cluster-to-class map written by `cluster`, for class-aware AP.
    #[arg(long, value_name = "FILE")]
    pub cluster_map: Option<PathBuf>,
    /// Neighbors per image expected by corret.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: usize,
    /// Report, JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Optional plain-text table of the report.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

fn predictions(args: &EvalArgs) -> anyhow::Result<Vec<Detection>> {
    let Some(path) = &args.predictions else {
        bail!("--predictions is required for {:?}", args.metric);
    };
    read_predictions(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<EvalReport> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        bail!("--iou must lie in (0, 1], got {}", args.iou);
    }
    let gt = args.ground_truth.require()?;
    let report = match args.metric {
        Metric::Corloc => {
            let preds = predictions(args)?;
            let result = corloc(&preds, &gt)?;
            let mut report = EvalReport::default();
            report.metrics.insert("CorLoc".into(), result.percent);
            report.counts.insert("hits".into(), result.hits);
            report.counts.insert("evaluated".into(), result.evaluated);
            report
                .counts
                .insert("missing_predictions".into(), result.missing_predictions);
            report.counts.insert("excluded_no_gt".into(), result.excluded_no_gt);
            report
        }
        Metric::Odap => od_ap_report(&predictions(args)?, &gt),
        Metric::Ap => {
            let preds = predictions(args)?;
            match &args.cluster_map {
                Some(path) => {
                    let map: ClusterClassMap = read_json(path)?;
                    class_aware_ap(&preds, &map.pairs, &gt, args.iou)
                }
                None => {
                    let mut report = EvalReport::default();
                    let ap = average_precision(&preds, &gt, None, args.iou);
                    report
                        .metrics
                        .insert(format!("AP{}", (args.iou * 100.0).round()), 100.0 * ap);
                    report.counts.insert("images".into(), gt.len());
                    report.counts.insert("gt_boxes".into(), gt.n_boxes());
                    report.counts.insert("predictions".into(), preds.len());
                    report
                }
            }
        }
        Metric::Corret => {
            let Some(path) = &args.neighbors else {
                bail!("--neighbors is required for corret");
            };
            let neighbors: BTreeMap<String, Vec<String>> = read_json(path)?;
            let value = corret(&neighbors, &gt.image_classes(), args.tau)?;
            let mut report = EvalReport::default();
            report.metrics.insert("CorRet".into(), value);
            report.counts.insert("images".into(), neighbors.len());
            report.counts.insert("tau".into(), args.tau);
            report
        }
    };

    for (name, value) in &report.metrics {
        log::info!("{name} = {value:.2}");
    }
    write_text(&args.out, &report.to_json()?)?;
    if let Some(path) = &args.table {
        write_text(path, &report.to_table())?;
    }
    Ok(report)
}
