use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("non-finite value at element {index}")]
    NonFiniteValue { index: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("patch index {index} out of range for {len} patches")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("k = {k} exceeds the number of points ({points})")]
    KTooLarge { k: usize, points: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("need at least {needed} images, found {found}")]
    TooFewImages { needed: usize, found: usize },

    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),

    #[error("empty ground truth")]
    EmptyGroundTruth,

    #[error("missing class information for image {0:?}")]
    MissingClassInfo(String),

    #[error("malformed xml: {0}")]
    MalformedXml(String),

    #[error("missing image size in annotation for {0:?}")]
    MissingSize(String),

    #[error("inverted box in {image_id:?}: {detail}")]
    InvertedBox { image_id: String, detail: String },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("unknown category id {0}")]
    UnknownCategory(u64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
