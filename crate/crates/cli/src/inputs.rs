//! Locating and loading the files a command reads.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use lost_core::datasets::{parse_coco_file, parse_voc_dir, read_id_list, DatasetEntry};
use lost_core::{
    apply_filter, read_manifest, AnnotationSet, DatasetFilter, DatasetManifest, Detection,
    ImageManifest, PixelBox,
};
use rayon::prelude::*;

/// A required input file that does not exist. Commands with
/// `--skip-missing` skip the image instead of failing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingInput {
    pub image_id: String,
    pub role: String,
    pub path: Option<PathBuf>,
}

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(path) => write!(
                f,
                "{}: missing {} file {}",
                self.image_id,
                self.role,
                path.display()
            ),
            None => write!(f, "{}: manifest lists no {} file", self.image_id, self.role),
        }
    }
}

impl std::error::Error for MissingInput {}

/// One dataset image with its manifest loaded.
pub struct ImageInputs {
    pub manifest: ImageManifest,
    /// Directory the manifest's relative paths are resolved against.
    pub dir: PathBuf,
}

impl ImageInputs {
    /// Path of the file registered under `role`, which must exist.
    pub fn require(&self, role: &str) -> anyhow::Result<PathBuf> {
        let missing = |path| MissingInput {
            image_id: self.manifest.image_id.clone(),
            role: role.to_owned(),
            path,
        };
        let path = self
            .manifest
            .file_for(role, &self.dir)
            .ok_or_else(|| missing(None))?;
        if !path.is_file() {
            return Err(missing(Some(path)).into());
        }
        Ok(path)
    }
}

fn load_entry(entry: &DatasetEntry, manifest_path: &Path) -> anyhow::Result<ImageInputs> {
    if !manifest_path.is_file() {
        return Err(MissingInput {
            image_id: entry.image_id.clone(),
            role: "manifest".into(),
            path: Some(manifest_path.to_owned()),
        }
        .into());
    }
    let manifest = read_manifest(manifest_path)?;
    if manifest.image_id != entry.image_id {
        bail!(
            "{}: image manifest {} is for image {}",
            entry.image_id,
            manifest_path.display(),
            manifest.image_id
        );
    }
    if (manifest.image_w, manifest.image_h) != (entry.image_w, entry.image_h) {
        bail!(
            "{}: dataset lists {}x{} but the image manifest says {}x{}",
            entry.image_id,
            entry.image_w,
            entry.image_h,
            manifest.image_w,
            manifest.image_h
        );
    }
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(ImageInputs { manifest, dir })
}

/// Runs `boxer` over every image of a dataset manifest in parallel and
/// returns one detection per image, sorted by image id.
pub fn box_every_image<F>(dataset: &Path, skip_missing: bool, boxer: F) -> anyhow::Result<Vec<Detection>>
where
    F: Fn(&ImageInputs) -> anyhow::Result<PixelBox> + Sync,
{
    let manifest = DatasetManifest::read(dataset)
        .with_context(|| format!("reading dataset manifest {}", dataset.display()))?;
    let base = dataset.parent().map(Path::to_path_buf).unwrap_or_default();
    let results: Vec<anyhow::Result<Option<Detection>>> = manifest
        .images
        .par_iter()
        .map(|entry| {
            let outcome = load_entry(entry, &manifest.manifest_path(entry, &base))
                .and_then(|inputs| boxer(&inputs));
            match outcome {
                Ok(bbox) => Ok(Some(Detection::new(entry.image_id.clone(), bbox))),
                Err(err) if skip_missing && err.downcast_ref::<MissingInput>().is_some() => {
                    log::warn!("skipping {err}");
                    Ok(None)
                }
                Err(err) => Err(err),
            }
        })
        .collect();

    let mut detections = Vec::with_capacity(results.len());
    for result in results {
        if let Some(det) = result? {
            detections.push(det);
        }
    }
    detections.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    log::info!(
        "{} boxes for {} images",
        detections.len(),
        manifest.images.len()
    );
    Ok(detections)
}

/// Ground-truth source shared by the commands that score against it.
#[derive(Debug, Clone, Default, Args)]
pub struct GroundTruthArgs {
    /// Directory of VOC XML annotation files.
    #[arg(long, value_name = "DIR", conflicts_with = "coco")]
    pub voc_dir: Option<PathBuf>,
    /// COCO instances JSON file.
    #[arg(long, value_name = "FILE")]
    pub coco: Option<PathBuf>,
    /// Restrict COCO images to the ids listed in this file, one per line.
    #[arg(long, value_name = "FILE", requires = "coco")]
    pub coco_ids: Option<PathBuf>,
    /// Ground-truth variant: all boxes, or without hard/truncated ones.
    #[arg(long, default_value = "all", value_name = "all|noh")]
    pub filter: DatasetFilter,
}

impl GroundTruthArgs {
    pub fn is_given(&self) -> bool {
        self.voc_dir.is_some() || self.coco.is_some()
    }

    /// Loads and filters the annotations; `None` when no source is given.
    pub fn load(&self) -> anyhow::Result<Option<AnnotationSet>> {
        let set = if let Some(dir) = &self.voc_dir {
            parse_voc_dir(dir).with_context(|| format!("parsing VOC annotations in {}", dir.display()))?
        } else if let Some(file) = &self.coco {
            let subset = self
                .coco_ids
                .as_ref()
                .map(read_id_list)
                .transpose()?;
            parse_coco_file(file, subset.as_ref())
                .with_context(|| format!("parsing COCO annotations {}", file.display()))?
        } else {
            return Ok(None);
        };
        let set = apply_filter(&set, self.filter);
        log::info!(
            "ground truth: {} images, {} boxes, {} classes ({:?} filter)",
            set.len(),
            set.n_boxes(),
            set.classes().len(),
            self.filter
        );
        Ok(Some(set))
    }

    pub fn require(&self) -> anyhow::Result<AnnotationSet> {
        match self.load()? {
            Some(set) => Ok(set),
            None => bail!("ground truth required: pass --voc-dir or --coco"),
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Clap parser for counts that must be at least one.
pub fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}
