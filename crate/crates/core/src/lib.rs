//! Unsupervised single-object localization from vision-transformer patch
//! features.
//!
//! The crate covers the whole offline pipeline downstream of feature
//! extraction:
//!
//! - [`tensorio`]: binary feature, attention and descriptor files plus
//!   per-image manifests.
//! - [`patchgraph`]: the sign-of-similarity patch graph and its degrees.
//! - [`lost`]: seed selection, seed expansion, mask and box extraction.
//! - [`dinoseg`]: the attention-threshold baseline and its head selectors.
//! - [`cluster`]: K-means pseudo-labels, Hungarian matching, neighbor
//!   retrieval.
//! - [`evalmetrics`]: IoU, CorLoc, AP, odAP and CorRet.
//! - [`datasets`]: VOC/COCO ground truth and prediction files.
//!
//! ```
//! use lost_core::{localize, FeatureSet, ImageManifest, LocalizeConfig, PixelBox};
//! use lost_core::synthetic::{planted_object, PatchRect};
//!
//! let rect = PatchRect { row: 1, col: 2, height: 2, width: 3 };
//! let features = planted_object(6, 6, rect, &[1.0, 0.5], &[-1.0, 0.2]);
//! let manifest = ImageManifest::padded("demo", 96, 96, 16);
//! let found = localize(&FeatureSet::single(features), &manifest, &LocalizeConfig::default()).unwrap();
//! assert_eq!(found, PixelBox::new(32.0, 16.0, 80.0, 48.0));
//! ```

pub mod cluster;
pub mod datasets;
pub mod dinoseg;
pub mod error;
pub mod evalmetrics;
pub mod lost;
pub mod patchgraph;
pub mod synthetic;
pub mod tensorio;

pub use cluster::{
    hungarian, kmeans, match_clusters, retrieve_neighbors, Assignment, ClusterClassMap,
    ClusterModel,
};
pub use datasets::{
    apply_filter, parse_coco, parse_voc, AnnotationSet, DatasetFilter, DatasetManifest, Detection,
    GtObject, ImageAnnotations,
};
pub use dinoseg::{head_box, select_head_box, HeadSelection};
pub use error::{Error, Result};
pub use evalmetrics::{average_precision, corloc, corret, iou, od_ap, EvalReport};
pub use lost::{
    build_mask, connected_components, expand_seed, extract_box, localize, localize_detailed,
    select_seed, LocalizeConfig, Localization, PatchMask, PixelBox, SeedSet,
};
pub use patchgraph::{
    degree_map, inverse_degree_field, similarity_sign, DegreeMap, FeatureSet, PatchGraph,
    SimilarityMode,
};
pub use tensorio::{
    read_attention_stack, read_crop_descriptors, read_feature_map, read_manifest,
    write_attention_stack, write_crop_descriptors, write_feature_map, write_manifest,
    AttentionStack, CropDescriptor, FeatureKind, FeatureMap, ImageManifest,
};
