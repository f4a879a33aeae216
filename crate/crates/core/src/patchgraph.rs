//! Binary patch-similarity graph and patch degrees.
//!
//! Two patches are adjacent when their similarity score is non-negative. The
//! score is either a plain dot product of one feature kind, or the
//! symmetrized query/key product `q_p·k_q + k_p·q_q`. Degrees count the
//! self-edge. Dot products are accumulated in `f64` in feature-index order,
//! so every sign test is a pure function of the two patches.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{FeatureKind, FeatureMap};

/// How patch-to-patch similarity is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMode {
    Dot(FeatureKind),
    SymQk,
}

impl Default for SimilarityMode {
    fn default() -> Self {
        SimilarityMode::Dot(FeatureKind::Key)
    }
}

impl SimilarityMode {
    /// Feature kinds that must be available to score in this mode.
    pub fn required_kinds(self) -> &'static [FeatureKind] {
        match self {
            SimilarityMode::Dot(FeatureKind::Key) => &[FeatureKind::Key],
            SimilarityMode::Dot(FeatureKind::Query) => &[FeatureKind::Query],
            SimilarityMode::Dot(FeatureKind::Value) => &[FeatureKind::Value],
            SimilarityMode::SymQk => &[FeatureKind::Query, FeatureKind::Key],
        }
    }
}

impl fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityMode::Dot(kind) => write!(f, "{kind}"),
            SimilarityMode::SymQk => f.write_str("sym-qk"),
        }
    }
}

impl FromStr for SimilarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym-qk" | "symqk" => Ok(SimilarityMode::SymQk),
            other => other.parse().map(SimilarityMode::Dot),
        }
    }
}

/// The feature maps exported for one image, by kind.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub key: Option<FeatureMap>,
    pub query: Option<FeatureMap>,
    pub value: Option<FeatureMap>,
}

impl FeatureSet {
    pub fn single(fm: FeatureMap) -> Self {
        let mut set = FeatureSet::default();
        set.insert(fm);
        set
    }

    pub fn insert(&mut self, fm: FeatureMap) {
        match fm.kind() {
            FeatureKind::Key => self.key = Some(fm),
            FeatureKind::Query => self.query = Some(fm),
            FeatureKind::Value => self.value = Some(fm),
        }
    }

    pub fn get(&self, kind: FeatureKind) -> Option<&FeatureMap> {
        match kind {
            FeatureKind::Key => self.key.as_ref(),
            FeatureKind::Query => self.query.as_ref(),
            FeatureKind::Value => self.value.as_ref(),
        }
    }

    pub fn graph(&self, mode: SimilarityMode) -> Result<PatchGraph<'_>> {
        let need = |kind: FeatureKind| {
            self.get(kind).ok_or_else(|| {
                Error::InvalidInput(format!("similarity mode {mode} needs {kind} features"))
            })
        };
        match mode {
            SimilarityMode::Dot(kind) => Ok(PatchGraph::dot(need(kind)?)),
            SimilarityMode::SymQk => {
                PatchGraph::sym_qk(need(FeatureKind::Query)?, need(FeatureKind::Key)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Scorer<'a> {
    Dot(&'a FeatureMap),
    SymQk {
        query: &'a FeatureMap,
        key: &'a FeatureMap,
    },
}

/// Similarity structure over the patches of one image. Never materializes
/// the `N x N` adjacency unless [`PatchGraph::adjacency`] is asked for.
#[derive(Debug, Clone, Copy)]
pub struct PatchGraph<'a> {
    scorer: Scorer<'a>,
}

impl<'a> PatchGraph<'a> {
    pub fn dot(features: &'a FeatureMap) -> Self {
        Self {
            scorer: Scorer::Dot(features),
        }
    }

    pub fn sym_qk(query: &'a FeatureMap, key: &'a FeatureMap) -> Result<Self> {
        if !query.same_geometry(key) {
            return Err(Error::GeometryMismatch(format!(
                "query map {}x{}x{} vs key map {}x{}x{}",
                query.grid_h(),
                query.grid_w(),
                query.dim(),
                key.grid_h(),
                key.grid_w(),
                key.dim()
            )));
        }
        Ok(Self {
            scorer: Scorer::SymQk { query, key },
        })
    }

    pub fn mode(&self) -> SimilarityMode {
        match self.scorer {
            Scorer::Dot(fm) => SimilarityMode::Dot(fm.kind()),
            Scorer::SymQk { .. } => SimilarityMode::SymQk,
        }
    }

    fn reference(&self) -> &'a FeatureMap {
        match self.scorer {
            Scorer::Dot(fm) => fm,
            Scorer::SymQk { key, .. } => key,
        }
    }

    pub fn grid_h(&self) -> usize {
        self.reference().grid_h()
    }

    pub fn grid_w(&self) -> usize {
        self.reference().grid_w()
    }

    pub fn n_patches(&self) -> usize {
        self.reference().n_patches()
    }

    /// Raw similarity score between two in-range patches. Exactly symmetric.
    #[inline]
    pub fn score(&self, p: usize, q: usize) -> f64 {
        match self.scorer {
            Scorer::Dot(fm) => dot(fm.patch(p), fm.patch(q)),
            Scorer::SymQk { query, key } => {
                dot(query.patch(p), key.patch(q)) + dot(key.patch(p), query.patch(q))
            }
        }
    }

    #[inline]
    pub fn adjacent(&self, p: usize, q: usize) -> bool {
        self.score(p, q) >= 0.0
    }

    /// Edge test with bounds checking.
    pub fn similarity_sign(&self, p: usize, q: usize) -> Result<bool> {
        let n = self.n_patches();
        for index in [p, q] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        Ok(self.adjacent(p, q))
    }

    fn row_degree(&self, p: usize) -> u32 {
        (0..self.n_patches()).filter(|&q| self.adjacent(p, q)).count() as u32
    }

    /// Degrees computed row by row without storing the adjacency.
    pub fn degree_map(&self) -> DegreeMap {
        let degrees = (0..self.n_patches())
            .into_par_iter()
            .map(|p| self.row_degree(p))
            .collect();
        DegreeMap {
            grid_h: self.grid_h(),
            grid_w: self.grid_w(),
            degrees,
        }
    }

    /// Dense adjacency matrix; intended for debugging and cross-checks.
    pub fn adjacency(&self) -> Adjacency {
        let n = self.n_patches();
        let mut bits = vec![false; n * n];
        for p in 0..n {
            for q in p..n {
                let edge = self.adjacent(p, q);
                bits[p * n + q] = edge;
                bits[q * n + p] = edge;
            }
        }
        Adjacency {
            grid_h: self.grid_h(),
            grid_w: self.grid_w(),
            bits,
        }
    }
}

/// Free-function form of [`PatchGraph::similarity_sign`].
pub fn similarity_sign(graph: &PatchGraph<'_>, p: usize, q: usize) -> Result<bool> {
    graph.similarity_sign(p, q)
}

pub fn degree_map(graph: &PatchGraph<'_>) -> DegreeMap {
    graph.degree_map()
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + f64::from(x) * f64::from(y))
}

/// Materialized `N x N` adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    grid_h: usize,
    grid_w: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn get(&self, p: usize, q: usize) -> bool {
        self.bits[p * self.n_patches() + q]
    }

    pub fn degree_map(&self) -> DegreeMap {
        let n = self.n_patches();
        let degrees = self
            .bits
            .chunks(n.max(1))
            .map(|row| row.iter().filter(|&&b| b).count() as u32)
            .collect();
        DegreeMap {
            grid_h: self.grid_h,
            grid_w: self.grid_w,
            degrees,
        }
    }
}

/// Per-patch degree in the similarity graph, self-edge included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeMap {
    pub grid_h: usize,
    pub grid_w: usize,
    pub degrees: Vec<u32>,
}

impl DegreeMap {
    pub fn new(grid_h: usize, grid_w: usize, degrees: Vec<u32>) -> Result<Self> {
        let n = grid_h * grid_w;
        if degrees.len() != n {
            return Err(Error::SizeMismatch(format!(
                "{grid_h}x{grid_w} grid needs {n} degrees, got {}",
                degrees.len()
            )));
        }
        if let Some(p) = degrees.iter().position(|&d| d == 0 || d as usize > n) {
            return Err(Error::InvalidInput(format!(
                "degree {} of patch {p} outside [1, {n}]",
                degrees[p]
            )));
        }
        Ok(Self {
            grid_h,
            grid_w,
            degrees,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.degrees.len()
    }

    /// `1 / d_p` per patch, for heatmap rendering.
    pub fn inverse_degree_field(&self) -> Vec<f64> {
        self.degrees.iter().map(|&d| 1.0 / f64::from(d)).collect()
    }
}

pub fn inverse_degree_field(dm: &DegreeMap) -> Vec<f64> {
    dm.inverse_degree_field()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(grid_h: usize, grid_w: usize, rows: &[&[f32]]) -> FeatureMap {
        let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.to_vec()).collect();
        FeatureMap::from_rows(grid_h, grid_w, FeatureKind::Key, &rows).unwrap()
    }

    fn two_by_two() -> FeatureMap {
        fm(2, 2, &[&[1.0, 0.0], &[1.0, 0.1], &[1.0, 0.2], &[-1.0, 0.05]])
    }

    #[test]
    fn sign_cases() {
        let f = fm(1, 2, &[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!(PatchGraph::dot(&f).similarity_sign(0, 1).unwrap());

        let f = fm(1, 2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(PatchGraph::dot(&f).similarity_sign(0, 1).unwrap(), "zero dot takes the edge");

        let f = fm(1, 2, &[&[1.0, 0.1], &[-1.0, 0.05]]);
        let g = PatchGraph::dot(&f);
        assert!(g.score(0, 1) < -0.99 && g.score(0, 1) > -1.0);
        assert!(!g.similarity_sign(0, 1).unwrap());
        assert!(!g.similarity_sign(1, 0).unwrap());
    }

    #[test]
    fn out_of_range_index() {
        let f = two_by_two();
        assert!(matches!(
            PatchGraph::dot(&f).similarity_sign(0, 4),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn sym_qk_requires_matching_geometry() {
        let q = FeatureMap::new(2, 2, 2, FeatureKind::Query, vec![0.0; 8]).unwrap();
        let k = FeatureMap::new(2, 1, 4, FeatureKind::Key, vec![0.0; 8]).unwrap();
        assert!(matches!(PatchGraph::sym_qk(&q, &k), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn two_by_two_degrees() {
        let f = two_by_two();
        let dm = PatchGraph::dot(&f).degree_map();
        assert_eq!(dm.degrees, vec![3, 3, 3, 1]);
        let inv = dm.inverse_degree_field();
        assert_eq!(inv, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
    }

    #[test]
    fn complete_graph_and_single_patch() {
        let f = FeatureMap::new(3, 3, 2, FeatureKind::Key, [0.3f32, -1.2].repeat(9)).unwrap();
        assert_eq!(PatchGraph::dot(&f).degree_map().degrees, vec![9; 9]);

        let f = fm(1, 1, &[&[-2.0, 5.0]]);
        assert_eq!(PatchGraph::dot(&f).degree_map().degrees, vec![1]);
    }

    #[test]
    fn dense_path_agrees() {
        let f = two_by_two();
        let g = PatchGraph::dot(&f);
        assert_eq!(g.adjacency().degree_map(), g.degree_map());
    }

    #[test]
    fn inverse_field_of_plain_degrees() {
        let dm = DegreeMap::new(1, 3, vec![1, 2, 3]).unwrap();
        assert_eq!(dm.inverse_degree_field(), vec![1.0, 0.5, 1.0 / 3.0]);
        let dm = DegreeMap::new(1, 4, vec![1, 2, 4, 4]).unwrap();
        assert_eq!(dm.inverse_degree_field(), vec![1.0, 0.5, 0.25, 0.25]);
        assert!(DegreeMap::new(1, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("key".parse::<SimilarityMode>().unwrap(), SimilarityMode::Dot(FeatureKind::Key));
        assert_eq!("sym-qk".parse::<SimilarityMode>().unwrap(), SimilarityMode::SymQk);
        assert!("attention".parse::<SimilarityMode>().is_err());
        assert_eq!(SimilarityMode::SymQk.to_string(), "sym-qk");
    }
}
