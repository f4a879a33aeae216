//! Binary exchange formats shared with the feature extractor.
//!
//! Every header field is a little-endian `u32` and every payload element a
//! little-endian IEEE-754 `f32`. Patches are linearized row-major, so patch
//! `p` sits at `(p / grid_w, p % grid_w)` on the patch grid.
//!
//! ```text
//! feature file    "LFEA" | version | grid_h | grid_w | dim | kind u8 | 3 zero bytes | f32[grid_h*grid_w*dim]
//! attention file  "LATT" | version | heads | grid_h | grid_w | f32[heads*grid_h*grid_w]
//! crop file       "LCLS" | version | count | dim | count * (id_len | id bytes | f32[dim])
//! ```
//!
//! Loaders validate the whole buffer: any disagreement between declared
//! dimensions and the payload length is an error, as is any non-finite value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const FEATURE_MAGIC: [u8; 4] = *b"LFEA";
pub const ATTENTION_MAGIC: [u8; 4] = *b"LATT";
pub const CROP_MAGIC: [u8; 4] = *b"LCLS";

const FEATURE_HEADER_LEN: usize = 24;
const ATTENTION_HEADER_LEN: usize = 20;
const CROP_HEADER_LEN: usize = 16;

/// Which self-attention projection a feature map holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Key,
    Query,
    Value,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Key => 0,
            FeatureKind::Query => 1,
            FeatureKind::Value => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::Key),
            1 => Some(FeatureKind::Query),
            2 => Some(FeatureKind::Value),
            _ => None,
        }
    }

    /// Manifest role under which files of this kind are registered.
    pub fn role(self) -> &'static str {
        match self {
            FeatureKind::Key => "key",
            FeatureKind::Query => "query",
            FeatureKind::Value => "value",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.role())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "key" | "keys" | "k" => Ok(FeatureKind::Key),
            "query" | "queries" | "q" => Ok(FeatureKind::Query),
            "value" | "values" | "v" => Ok(FeatureKind::Value),
            other => Err(Error::InvalidInput(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Per-image grid of `dim`-dimensional patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    kind: FeatureKind,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        dim: usize,
        kind: FeatureKind,
        data: Vec<f32>,
    ) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || dim == 0 {
            return Err(Error::InvalidTensor(format!(
                "feature map dimensions must be positive (h={grid_h}, w={grid_w}, d={dim})"
            )));
        }
        let expected = checked_product(&[grid_h, grid_w, dim])?;
        if data.len() != expected {
            return Err(Error::SizeMismatch(format!(
                "{grid_h}x{grid_w}x{dim} feature map needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            kind,
            data,
        })
    }

    /// Builds a map from one feature vector per patch, in row-major order.
    pub fn from_rows(
        grid_h: usize,
        grid_w: usize,
        kind: FeatureKind,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(grid_h, grid_w, dim, kind, data)
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature vector of patch `p`. Panics if `p` is out of range.
    #[inline]
    pub fn patch(&self, p: usize) -> &[f32] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn same_geometry(&self, other: &FeatureMap) -> bool {
        self.grid_h == other.grid_h && self.grid_w == other.grid_w && self.dim == other.dim
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_finite(&self.data)?;
        let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&FEATURE_MAGIC);
        for v in [FORMAT_VERSION, to_u32(self.grid_h)?, to_u32(self.grid_w)?, to_u32(self.dim)?] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[self.kind.code(), 0, 0, 0]);
        put_f32s(&mut out, &self.data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(FEATURE_MAGIC)?;
        r.version()?;
        let grid_h = r.u32()? as usize;
        let grid_w = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let kind_and_pad = r.take(4)?;
        let kind = FeatureKind::from_code(kind_and_pad[0]).ok_or_else(|| {
            Error::InvalidTensor(format!("unknown feature kind code {}", kind_and_pad[0]))
        })?;
        if kind_and_pad[1..] != [0, 0, 0] {
            return Err(Error::InvalidTensor("non-zero header padding".into()));
        }
        let count = checked_product(&[grid_h, grid_w, dim])?;
        let data = r.f32s(count)?;
        r.finish()?;
        Self::new(grid_h, grid_w, dim, kind, data)
    }
}

/// CLS-query self-attention over the patch grid, one map per head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    heads: usize,
    grid_h: usize,
    grid_w: usize,
    data: Vec<f32>,
}

impl AttentionStack {
    pub fn new(heads: usize, grid_h: usize, grid_w: usize, data: Vec<f32>) -> Result<Self> {
        if heads == 0 || grid_h == 0 || grid_w == 0 {
            return Err(Error::InvalidTensor(format!(
                "attention dimensions must be positive (heads={heads}, h={grid_h}, w={grid_w})"
            )));
        }
        let expected = checked_product(&[heads, grid_h, grid_w])?;
        if data.len() != expected {
            return Err(Error::SizeMismatch(format!(
                "{heads}x{grid_h}x{grid_w} attention stack needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            heads,
            grid_h,
            grid_w,
            data,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Attention map of one head. Panics if `head >= heads`.
    pub fn head(&self, head: usize) -> &[f32] {
        let n = self.n_patches();
        &self.data[head * n..(head + 1) * n]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_finite(&self.data)?;
        let mut out = Vec::with_capacity(ATTENTION_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&ATTENTION_MAGIC);
        for v in [FORMAT_VERSION, to_u32(self.heads)?, to_u32(self.grid_h)?, to_u32(self.grid_w)?] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, &self.data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(ATTENTION_MAGIC)?;
        r.version()?;
        let heads = r.u32()? as usize;
        let grid_h = r.u32()? as usize;
        let grid_w = r.u32()? as usize;
        let count = checked_product(&[heads, grid_h, grid_w])?;
        let data = r.f32s(count)?;
        r.finish()?;
        Self::new(heads, grid_h, grid_w, data)
    }
}

/// CLS descriptor of one image's box crop.
#[derive(Debug, Clone, PartialEq)]
pub struct CropDescriptor {
    pub image_id: String,
    pub vector: Vec<f32>,
}

pub fn crop_descriptors_to_bytes(records: &[CropDescriptor]) -> Result<Vec<u8>> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut out = Vec::with_capacity(CROP_HEADER_LEN + records.len() * (8 + dim * 4));
    out.extend_from_slice(&CROP_MAGIC);
    for v in [FORMAT_VERSION, to_u32(records.len())?, to_u32(dim)?] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for rec in records {
        if rec.vector.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: rec.vector.len(),
            });
        }
        check_finite(&rec.vector)?;
        out.extend_from_slice(&to_u32(rec.image_id.len())?.to_le_bytes());
        out.extend_from_slice(rec.image_id.as_bytes());
        put_f32s(&mut out, &rec.vector);
    }
    Ok(out)
}

pub fn crop_descriptors_from_bytes(bytes: &[u8]) -> Result<Vec<CropDescriptor>> {
    let mut r = ByteReader::new(bytes);
    r.magic(CROP_MAGIC)?;
    r.version()?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if count > 0 && dim == 0 {
        return Err(Error::InvalidTensor("crop descriptors with zero dimension".into()));
    }
    // Each record needs at least its length prefix and payload.
    let min_record = checked_product(&[dim, 4])?.saturating_add(4);
    if count.saturating_mul(min_record) > r.remaining() {
        return Err(Error::SizeMismatch(format!(
            "{count} records of dimension {dim} cannot fit in {} bytes",
            r.remaining()
        )));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.u32()? as usize;
        let id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|e| Error::InvalidTensor(format!("image id is not utf-8: {e}")))?
            .to_owned();
        let vector = r.f32s(dim)?;
        check_finite(&vector)?;
        records.push(CropDescriptor {
            image_id: id,
            vector,
        });
    }
    r.finish()?;
    Ok(records)
}

/// Per-image geometry and the files exported for it.
///
/// `feature_files` maps a role (`key`, `query`, `value`, `attention`) to a
/// path, resolved relative to the manifest's directory when not absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub image_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub pad_w: u32,
    pub pad_h: u32,
    pub patch_size: u32,
    #[serde(default)]
    pub feature_files: BTreeMap<String, PathBuf>,
}

impl ImageManifest {
    /// Manifest for an image padded bottom/right up to the next multiple of
    /// `patch_size`.
    pub fn padded(image_id: impl Into<String>, image_w: u32, image_h: u32, patch_size: u32) -> Self {
        let round_up = |v: u32| v.div_ceil(patch_size.max(1)) * patch_size.max(1);
        Self {
            image_id: image_id.into(),
            image_w,
            image_h,
            pad_w: round_up(image_w),
            pad_h: round_up(image_h),
            patch_size,
            feature_files: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidManifest(format!("{}: {msg}", self.image_id)));
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        if self.image_w == 0 || self.image_h == 0 {
            return bad(format!("empty image {}x{}", self.image_w, self.image_h));
        }
        if self.pad_w < self.image_w || self.pad_h < self.image_h {
            return bad(format!(
                "padded size {}x{} smaller than image {}x{}",
                self.pad_w, self.pad_h, self.image_w, self.image_h
            ));
        }
        if self.pad_w % self.patch_size != 0 || self.pad_h % self.patch_size != 0 {
            return bad(format!(
                "padded size {}x{} not a multiple of patch size {}",
                self.pad_w, self.pad_h, self.patch_size
            ));
        }
        Ok(())
    }

    pub fn grid_w(&self) -> usize {
        (self.pad_w / self.patch_size) as usize
    }

    pub fn grid_h(&self) -> usize {
        (self.pad_h / self.patch_size) as usize
    }

    pub fn n_patches(&self) -> usize {
        self.grid_w() * self.grid_h()
    }

    pub fn check_grid(&self, grid_h: usize, grid_w: usize) -> Result<()> {
        if grid_h != self.grid_h() || grid_w != self.grid_w() {
            return Err(Error::GeometryMismatch(format!(
                "{}: tensor grid {grid_h}x{grid_w} but manifest implies {}x{}",
                self.image_id,
                self.grid_h(),
                self.grid_w()
            )));
        }
        Ok(())
    }

    pub fn file_for(&self, role: &str, base_dir: &Path) -> Option<PathBuf> {
        self.feature_files.get(role).map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: ImageManifest = serde_json::from_str(text)
            .map_err(|e| Error::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidManifest(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    FeatureMap::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_feature_map(fm: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &fm.to_bytes()?)
}

pub fn read_attention_stack(path: impl AsRef<Path>) -> Result<AttentionStack> {
    AttentionStack::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_attention_stack(att: &AttentionStack, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &att.to_bytes()?)
}

pub fn read_crop_descriptors(path: impl AsRef<Path>) -> Result<Vec<CropDescriptor>> {
    crop_descriptors_from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_crop_descriptors(records: &[CropDescriptor], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &crop_descriptors_to_bytes(records)?)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<ImageManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ImageManifest::from_json(&text)
}

pub fn write_manifest(manifest: &ImageManifest, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), manifest.to_json()?.as_bytes())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { index }),
        None => Ok(()),
    }
}

fn checked_product(factors: &[usize]) -> Result<usize> {
    factors
        .iter()
        .try_fold(1usize, |acc, &f| acc.checked_mul(f))
        .ok_or_else(|| Error::SizeMismatch(format!("declared dimensions {factors:?} overflow")))
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidTensor(format!("{v} does not fit in a u32 header")))
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::SizeMismatch(format!(
                "need {n} bytes at offset {}, only {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let found = self.u32()?;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found,
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::SizeMismatch(format!("{count} floats overflow")))?;
        if len > self.remaining() {
            return Err(Error::SizeMismatch(format!(
                "declared {count} floats ({len} bytes) but only {} bytes of payload",
                self.remaining()
            )));
        }
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::SizeMismatch(format!(
                "{} trailing bytes after payload",
                self.remaining()
            )));
        }
        Ok(())
    }
}
