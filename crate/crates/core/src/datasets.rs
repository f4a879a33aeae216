//! Ground-truth ingestion and prediction persistence.
//!
//! VOC boxes are 1-based inclusive pixel coordinates; they become 0-based
//! half-open boxes by shifting only the minimum corner. COCO `[x, y, w, h]`
//! boxes become `(x, y, x + w, y + h)`. Parsed boxes are clipped to the
//! recorded image size.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lost::PixelBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub class: String,
    pub bbox: PixelBox,
    #[serde(default)]
    pub difficult: bool,
    #[serde(default)]
    pub truncated: bool,
}

impl GtObject {
    pub fn is_hard_or_truncated(&self) -> bool {
        self.difficult || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GtObject>,
}

/// Ground truth keyed by image id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: BTreeMap<String, ImageAnnotations>,
}

impl AnnotationSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_boxes(&self) -> usize {
        self.images.values().map(|a| a.objects.len()).sum()
    }

    /// Sorted distinct class names.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .images
            .values()
            .flat_map(|a| a.objects.iter().map(|o| o.class.as_str()))
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn image_classes(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.images
            .iter()
            .map(|(id, a)| (id.clone(), a.objects.iter().map(|o| o.class.clone()).collect()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (id, ann) in &self.images {
            for obj in &ann.objects {
                obj.bbox
                    .validate(f64::from(ann.width), f64::from(ann.height))
                    .map_err(|e| Error::InvalidInput(format!("{id}: {e}")))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFilter {
    #[default]
    All,
    /// Drop hard/truncated boxes, then images left without boxes.
    Noh,
}

impl FromStr for DatasetFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(DatasetFilter::All),
            "noh" => Ok(DatasetFilter::Noh),
            other => Err(Error::InvalidInput(format!("unknown dataset filter {other:?}"))),
        }
    }
}

pub fn apply_filter(set: &AnnotationSet, filter: DatasetFilter) -> AnnotationSet {
    match filter {
        DatasetFilter::All => set.clone(),
        DatasetFilter::Noh => AnnotationSet {
            images: set
                .images
                .iter()
                .filter_map(|(id, ann)| {
                    let objects: Vec<GtObject> = ann
                        .objects
                        .iter()
                        .filter(|o| !o.is_hard_or_truncated())
                        .cloned()
                        .collect();
                    (!objects.is_empty()).then(|| {
                        (
                            id.clone(),
                            ImageAnnotations {
                                objects,
                                ..ann.clone()
                            },
                        )
                    })
                })
                .collect(),
        },
    }
}

// ---------------------------------------------------------------------------
// VOC

/// Parses one VOC annotation document. The image id defaults to the stem of
/// the `<filename>` element.
pub fn parse_voc_document(xml: &str, image_id: Option<&str>) -> Result<(String, ImageAnnotations)> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    let image_id = match image_id {
        Some(id) => id.to_owned(),
        None => child_text(root, "filename")
            .map(|f| file_stem(Path::new(f)))
            .ok_or_else(|| Error::MalformedXml("annotation without <filename>".into()))?,
    };

    let size = child(root, "size").ok_or_else(|| Error::MissingSize(image_id.clone()))?;
    let dim = |name: &str| -> Result<u32> {
        child_text(size, name)
            .and_then(|t| t.trim().parse::<f64>().ok())
            .filter(|v| *v >= 1.0)
            .map(|v| v as u32)
            .ok_or_else(|| Error::MissingSize(image_id.clone()))
    };
    let (width, height) = (dim("width")?, dim("height")?);

    let mut objects = Vec::new();
    for obj in root.children().filter(|n| n.has_tag_name("object")) {
        let class = child_text(obj, "name")
            .map(|s| s.trim().to_owned())
            .ok_or_else(|| Error::MalformedXml(format!("{image_id}: object without <name>")))?;
        let flag = |name: &str| child_text(obj, name).is_some_and(|t| t.trim() == "1");
        let bnd = child(obj, "bndbox")
            .ok_or_else(|| Error::MalformedXml(format!("{image_id}: object without <bndbox>")))?;
        let coord = |name: &str| -> Result<f64> {
            child_text(bnd, name)
                .and_then(|t| t.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedXml(format!("{image_id}: bad or missing <{name}>")))
        };
        let (x0, y0, x1, y1) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
        if x1 < x0 || y1 < y0 {
            return Err(Error::InvertedBox {
                image_id,
                detail: format!("xmin={x0} ymin={y0} xmax={x1} ymax={y1}"),
            });
        }
        let bbox = clip_box(x0 - 1.0, y0 - 1.0, x1, y1, width, height).ok_or_else(|| {
            Error::InvertedBox {
                image_id: image_id.clone(),
                detail: format!("box ({x0},{y0},{x1},{y1}) outside {width}x{height} image"),
            }
        })?;
        objects.push(GtObject {
            class,
            bbox,
            difficult: flag("difficult"),
            truncated: flag("truncated"),
        });
    }
    Ok((
        image_id,
        ImageAnnotations {
            width,
            height,
            objects,
        },
    ))
}

/// Parses VOC files; each image id is the file stem.
pub fn parse_voc<P: AsRef<Path>>(files: &[P]) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::default();
    for path in files {
        let path = path.as_ref();
        let xml = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (id, ann) = parse_voc_document(&xml, Some(&file_stem(path)))?;
        if set.images.insert(id.clone(), ann).is_some() {
            return Err(Error::DuplicateImage(id));
        }
    }
    Ok(set)
}

/// Every `*.xml` file of a directory, in name order.
pub fn parse_voc_dir(dir: impl AsRef<Path>) -> Result<AnnotationSet> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "xml"))
        .collect();
    files.sort();
    parse_voc(&files)
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|n| n.text())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn clip_box(x0: f64, y0: f64, x1: f64, y1: f64, width: u32, height: u32) -> Option<PixelBox> {
    let (w, h) = (f64::from(width), f64::from(height));
    let b = PixelBox::new(x0.clamp(0.0, w), y0.clamp(0.0, h), x1.clamp(0.0, w), y1.clamp(0.0, h));
    (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
}

// ---------------------------------------------------------------------------
// COCO

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CocoDocument {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Parses a COCO instances document. Image ids are file-name stems. When
/// `subset` is given, only images whose stem or numeric id it lists are kept.
pub fn parse_coco(json: &str, subset: Option<&BTreeSet<String>>) -> Result<AnnotationSet> {
    let doc: CocoDocument =
        serde_json::from_str(json).map_err(|e| Error::SchemaViolation(e.to_string()))?;
    let categories: BTreeMap<u64, &str> =
        doc.categories.iter().map(|c| (c.id, c.name.as_str())).collect();

    let mut by_numeric: BTreeMap<u64, String> = BTreeMap::new();
    let mut set = AnnotationSet::default();
    for img in &doc.images {
        let id = file_stem(Path::new(&img.file_name));
        if let Some(keep) = subset {
            if !keep.contains(&id) && !keep.contains(&img.id.to_string()) {
                continue;
            }
        }
        if img.width == 0 || img.height == 0 {
            return Err(Error::SchemaViolation(format!("image {id} has zero size")));
        }
        if by_numeric.insert(img.id, id.clone()).is_some() {
            return Err(Error::SchemaViolation(format!("duplicate image id {}", img.id)));
        }
        let ann = ImageAnnotations {
            width: img.width,
            height: img.height,
            objects: Vec::new(),
        };
        if set.images.insert(id.clone(), ann).is_some() {
            return Err(Error::DuplicateImage(id));
        }
    }

    let known: BTreeSet<u64> = doc.images.iter().map(|i| i.id).collect();
    for ann in &doc.annotations {
        if !known.contains(&ann.image_id) {
            return Err(Error::SchemaViolation(format!(
                "annotation {} refers to unknown image {}",
                ann.id, ann.image_id
            )));
        }
        let Some(image_id) = by_numeric.get(&ann.image_id) else {
            continue; // outside the requested subset
        };
        let class = *categories
            .get(&ann.category_id)
            .ok_or(Error::UnknownCategory(ann.category_id))?;
        let [x, y, w, h] = ann.bbox;
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) || w < 0.0 || h < 0.0 {
            return Err(Error::SchemaViolation(format!("annotation {} has bbox {:?}", ann.id, ann.bbox)));
        }
        let entry = set.images.get_mut(image_id).expect("image registered above");
        match clip_box(x, y, x + w, y + h, entry.width, entry.height) {
            Some(bbox) => entry.objects.push(GtObject {
                class: class.to_owned(),
                bbox,
                difficult: ann.iscrowd != 0,
                truncated: false,
            }),
            None => log::warn!("{image_id}: dropping empty box {:?}", ann.bbox),
        }
    }
    Ok(set)
}

pub fn parse_coco_file(path: impl AsRef<Path>, subset: Option<&BTreeSet<String>>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coco(&json, subset)
}

/// Reads an image-id list, one id per line; blank lines and `#` comments are
/// skipped.
pub fn read_id_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| file_stem(Path::new(l)))
        .collect())
}

/// Exports COCO JSON. Truncation flags have no COCO field and are dropped;
/// difficult boxes are written as crowd annotations.
pub fn to_coco_json(set: &AnnotationSet) -> Result<String> {
    let classes = set.classes();
    let cat_id = |name: &str| classes.binary_search_by(|c| c.as_str().cmp(name)).unwrap() as u64 + 1;
    let mut doc = CocoDocument {
        images: Vec::with_capacity(set.len()),
        annotations: Vec::with_capacity(set.n_boxes()),
        categories: classes
            .iter()
            .enumerate()
            .map(|(i, name)| CocoCategory {
                id: i as u64 + 1,
                name: name.clone(),
            })
            .collect(),
    };
    for (i, (id, ann)) in set.images.iter().enumerate() {
        let numeric = i as u64 + 1;
        doc.images.push(CocoImage {
            id: numeric,
            file_name: format!("{id}.jpg"),
            width: ann.width,
            height: ann.height,
        });
        for obj in &ann.objects {
            let b = obj.bbox;
            doc.annotations.push(CocoAnnotation {
                id: doc.annotations.len() as u64 + 1,
                image_id: numeric,
                category_id: cat_id(&obj.class),
                bbox: [b.x_min, b.y_min, b.x_max - b.x_min, b.y_max - b.y_min],
                iscrowd: u8::from(obj.difficult),
            });
        }
    }
    serde_json::to_string_pretty(&doc).map_err(|e| Error::SchemaViolation(e.to_string()))
}

// ---------------------------------------------------------------------------
// Dataset manifest and predictions

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub image_id: String,
    /// Image manifest path, relative to the dataset manifest's directory.
    pub manifest: PathBuf,
    pub image_w: u32,
    pub image_h: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for entry in &manifest.images {
            if !seen.insert(entry.image_id.as_str()) {
                return Err(Error::DuplicateImage(entry.image_id.clone()));
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidManifest(e.to_string()))?;
        text.push('\n');
        crate::tensorio::write_bytes(path.as_ref(), text.as_bytes())
    }

    pub fn manifest_path(&self, entry: &DatasetEntry, base_dir: &Path) -> PathBuf {
        if entry.manifest.is_absolute() {
            entry.manifest.clone()
        } else {
            base_dir.join(&entry.manifest)
        }
    }
}

/// One predicted box, as stored in a JSON Lines predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(flatten)]
    pub bbox: PixelBox,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: PixelBox) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
        }
    }
}

pub fn predictions_to_jsonl(preds: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in preds {
        out.push_str(&serde_json::to_string(d).map_err(|e| Error::InvalidInput(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Detection]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(predictions_to_jsonl(preds)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let det: Detection = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(det);
    }
    Ok(out)
}
