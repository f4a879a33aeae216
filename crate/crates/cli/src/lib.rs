//! Command-line driver: localization, baselines, clustering, retrieval,
//! evaluation, rendering and synthetic fixtures over exported features.
//!
//! Every command is a plain function taking its parsed arguments, so the
//! binary in `main.rs` only parses and dispatches.

mod cluster;
mod detect;
mod eval;
mod inputs;
mod render;
mod synth;

use clap::{Parser, Subcommand};

pub use cluster::{cmd_cluster, cmd_retrieve, ClusterArgs, RetrieveArgs};
pub use detect::{cmd_baseline, cmd_detect, BaselineArgs, DetectArgs};
pub use eval::{cmd_eval, EvalArgs, Metric};
pub use inputs::{GroundTruthArgs, MissingInput};
pub use render::{cmd_render, RenderArgs, RenderOutput};
pub use synth::{cmd_synth, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "lost", version, about = "Unsupervised single-object localization from transformer patch features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Localize one object per image from patch features.
    Detect(DetectArgs),
    /// One box per image from CLS attention maps (DINO-seg baseline).
    Baseline(BaselineArgs),
    /// Pseudo-label predictions by K-means over crop descriptors.
    Cluster(ClusterArgs),
    /// Nearest images by cosine similarity of crop descriptors.
    Retrieve(RetrieveArgs),
    /// Score predictions or neighbor lists against ground truth.
    Eval(EvalArgs),
    /// Draw the seed and boxes over an image, plus an inverse-degree heatmap.
    Render(RenderArgs),
    /// Write a synthetic dataset with planted objects.
    Synth(SynthArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Detect(args) => cmd_detect(&args).map(drop),
        Command::Baseline(args) => cmd_baseline(&args).map(drop),
        Command::Cluster(args) => cmd_cluster(&args).map(drop),
        Command::Retrieve(args) => cmd_retrieve(&args).map(drop),
        Command::Eval(args) => cmd_eval(&args).map(drop),
        Command::Render(args) => cmd_render(&args).map(drop),
        Command::Synth(args) => cmd_synth(&args),
    }
}
