//! Tentative correspondences: k-NN descriptor search, the first-geometrically-
//! inconsistent ratio test (FGINN), the second-nearest ratio test (SNN), and
//! spatial duplicate filtering.

mod kdtree;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{DescribedFeature, Descriptor, DescriptorKind};
use crate::features::AffineFrame;
use crate::geometry::Mat2;
use kdtree::{KdForest, Scratch, TopK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("descriptor kinds differ: {0:?} vs {1:?}")]
    KindMismatch(DescriptorKind, DescriptorKind),
    #[error("empty descriptor pool")]
    EmptyPool,
    #[error("invalid matching config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    Fginn,
    Snn,
}

/// How the nearest-neighbour index answers queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exhaustive scan.
    Exact,
    /// Randomized kd-forest; binary descriptors always use the exact scan.
    Approximate { trees: usize, checks: usize },
    /// Exact for pools up to `APPROXIMATE_ABOVE`, approximate beyond.
    Auto,
}

impl Default for SearchMode {
    fn default() -> Self {
        SearchMode::Auto
    }
}

/// Pool size above which [`SearchMode::Auto`] switches to the kd-forest.
pub const APPROXIMATE_ABOVE: usize = 4000;
const AUTO_TREES: usize = 4;
const AUTO_CHECKS: usize = 768;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub inconsistency_radius_px: f64,
    pub ratio_threshold: f64,
    pub strategy: MatchStrategy,
    pub k_neighbors: usize,
    #[serde(default)]
    pub search: SearchMode,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            inconsistency_radius_px: 10.0,
            ratio_threshold: 0.8,
            strategy: MatchStrategy::Fginn,
            k_neighbors: 10,
            search: SearchMode::Auto,
        }
    }
}

impl MatchingConfig {
    /// Defaults for binary descriptors, whose ratios concentrate higher.
    pub fn binary() -> Self {
        MatchingConfig { ratio_threshold: 0.9, ..Default::default() }
    }

    pub fn for_kind(kind: DescriptorKind) -> Self {
        match kind {
            DescriptorKind::RootSift => Self::default(),
            DescriptorKind::Binary => Self::binary(),
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.inconsistency_radius_px > 0.0) {
            return Err(MatchError::InvalidConfig("inconsistency radius must be > 0".into()));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(MatchError::InvalidConfig("ratio threshold must be in (0, 1]".into()));
        }
        if self.k_neighbors < 2 {
            return Err(MatchError::InvalidConfig("k_neighbors must be >= 2".into()));
        }
        if let SearchMode::Approximate { trees, checks } = self.search {
            if trees == 0 || checks == 0 {
                return Err(MatchError::InvalidConfig("kd-forest needs trees and checks >= 1".into()));
            }
        }
        Ok(())
    }
}

/// One side of a correspondence: the feature's position in its list plus its
/// geometry (descriptors are not carried along).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedFeature {
    pub index: usize,
    pub frame: AffineFrame,
    pub orientation: f64,
}

impl MatchedFeature {
    pub fn of(index: usize, f: &DescribedFeature) -> Self {
        MatchedFeature { index, frame: f.frame, orientation: f.orientation }
    }

    pub fn center(&self) -> crate::geometry::Vec2 {
        self.frame.center
    }

    /// The oriented local affine frame.
    pub fn laf(&self) -> Mat2 {
        self.frame.shape * crate::geometry::rotation(self.orientation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentativeCorrespondence {
    pub feat1: MatchedFeature,
    pub feat2: MatchedFeature,
    pub distance_ratio: f64,
    pub prune_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

enum Storage {
    Real(Vec<f32>),
    Bits(Vec<[u64; 4]>),
}

/// Nearest-neighbour index over one descriptor pool.
pub struct DescriptorIndex {
    kind: DescriptorKind,
    storage: Storage,
    forest: Option<KdForest>,
    checks: usize,
    len: usize,
}

const SIFT_DIM: usize = 128;

impl DescriptorIndex {
    pub fn build(pool: &[DescribedFeature], mode: SearchMode) -> Result<Self, MatchError> {
        let first = pool.first().ok_or(MatchError::EmptyPool)?;
        let kind = first.descriptor.kind();
        let storage = match kind {
            DescriptorKind::RootSift => {
                let mut data = Vec::with_capacity(pool.len() * SIFT_DIM);
                for f in pool {
                    match &f.descriptor {
                        Descriptor::RootSift(v) => data.extend_from_slice(v),
                        other => return Err(MatchError::KindMismatch(kind, other.kind())),
                    }
                }
                Storage::Real(data)
            }
            DescriptorKind::Binary => Storage::Bits(
                pool.iter()
                    .map(|f| match &f.descriptor {
                        Descriptor::Binary(b) => Ok(*b),
                        other => Err(MatchError::KindMismatch(kind, other.kind())),
                    })
                    .collect::<Result<_, _>>()?,
            ),
        };
        let (forest, checks) = match (&storage, mode) {
            (Storage::Real(data), SearchMode::Approximate { trees, checks }) => {
                (Some(KdForest::build(data, SIFT_DIM, trees)), checks)
            }
            (Storage::Real(data), SearchMode::Auto) if pool.len() > APPROXIMATE_ABOVE => {
                (Some(KdForest::build(data, SIFT_DIM, AUTO_TREES)), AUTO_CHECKS)
            }
            _ => (None, 0),
        };
        Ok(DescriptorIndex { kind, storage, forest, checks, len: pool.len() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    fn scratch(&self) -> Option<Scratch> {
        self.forest.as_ref().map(|_| Scratch::new(self.len))
    }

    fn knn_with(&self, query: &Descriptor, k: usize, scratch: &mut Option<Scratch>) -> Result<Vec<Neighbor>, MatchError> {
        let k = k.min(self.len);
        match (&self.storage, query) {
            (Storage::Real(data), Descriptor::RootSift(q)) => {
                let top = match (&self.forest, scratch.as_mut()) {
                    (Some(forest), Some(s)) => forest.search(data, q, k, self.checks, s),
                    _ => {
                        let mut top = TopK::new(k);
                        for (i, row) in data.chunks_exact(SIFT_DIM).enumerate() {
                            top.push(kdtree::squared_distance(q, row), i as u32);
                        }
                        top
                    }
                };
                Ok(top
                    .items
                    .into_iter()
                    .map(|(d, i)| Neighbor { index: i as usize, distance: (d.max(0.0) as f64).sqrt() })
                    .collect())
            }
            (Storage::Bits(bits), Descriptor::Binary(q)) => {
                let mut top = TopK::new(k);
                for (i, b) in bits.iter().enumerate() {
                    let d = (b[0] ^ q[0]).count_ones()
                        + (b[1] ^ q[1]).count_ones()
                        + (b[2] ^ q[2]).count_ones()
                        + (b[3] ^ q[3]).count_ones();
                    top.push(d as f32, i as u32);
                }
                Ok(top.items.into_iter().map(|(d, i)| Neighbor { index: i as usize, distance: d as f64 }).collect())
            }
            _ => Err(MatchError::KindMismatch(self.kind, query.kind())),
        }
    }

    /// The `k` nearest pool entries, ascending by distance, ties by index.
    pub fn knn(&self, query: &Descriptor, k: usize) -> Result<Vec<Neighbor>, MatchError> {
        self.knn_with(query, k, &mut self.scratch())
    }

    /// [`knn`](Self::knn) for many queries, in parallel, preserving order.
    pub fn knn_batch(&self, queries: &[&Descriptor], k: usize) -> Result<Vec<Vec<Neighbor>>, MatchError> {
        queries
            .par_iter()
            .map_init(|| self.scratch(), |scratch, q| self.knn_with(q, k, scratch))
            .collect()
    }
}

/// Convenience single-query search over a pool.
pub fn knn_search(query: &Descriptor, pool: &[DescribedFeature], k: usize) -> Result<Vec<Neighbor>, MatchError> {
    DescriptorIndex::build(pool, SearchMode::Exact)?.knn(query, k)
}

fn ratio(d1: f64, d2: f64) -> f64 {
    if d2 > 0.0 {
        (d1 / d2).min(1.0)
    } else {
        1.0
    }
}

/// FGINN ratio from a sorted neighbour list of length `≤ k + 1`.
fn fginn_ratio(neighbors: &[Neighbor], pool: &[DescribedFeature], k: usize, radius: f64) -> f64 {
    if pool.len() < 2 || neighbors.len() < 2 {
        return 0.0;
    }
    let first = &neighbors[0];
    let c1 = pool[first.index].frame.center;
    let scan_end = neighbors.len().min(k);
    for n in &neighbors[1..scan_end] {
        if (pool[n.index].frame.center - c1).norm() >= radius {
            return ratio(first.distance, n.distance);
        }
    }
    match neighbors.get(k) {
        // every candidate is a re-detection of the first; the next distance
        // bounds the first inconsistent one from below
        Some(bound) => ratio(first.distance, bound.distance),
        None => 0.0,
    }
}

fn match_with(
    feats1: &[DescribedFeature],
    feats2: &[DescribedFeature],
    cfg: &MatchingConfig,
    index: Option<&DescriptorIndex>,
) -> Result<Vec<TentativeCorrespondence>, MatchError> {
    cfg.validate()?;
    if feats1.is_empty() || feats2.is_empty() {
        return Ok(Vec::new());
    }
    let built;
    let index = match index {
        Some(i) => i,
        None => {
            built = DescriptorIndex::build(feats2, cfg.search)?;
            &built
        }
    };
    let k = match cfg.strategy {
        MatchStrategy::Fginn => cfg.k_neighbors + 1,
        MatchStrategy::Snn => 2,
    };
    let queries: Vec<&Descriptor> = feats1.iter().map(|f| &f.descriptor).collect();
    let neighbors = index.knn_batch(&queries, k)?;
    Ok(neighbors
        .iter()
        .enumerate()
        .filter_map(|(i, nb)| {
            let r = match cfg.strategy {
                MatchStrategy::Fginn => fginn_ratio(nb, feats2, cfg.k_neighbors, cfg.inconsistency_radius_px),
                MatchStrategy::Snn if nb.len() < 2 => 0.0,
                MatchStrategy::Snn => ratio(nb[0].distance, nb[1].distance),
            };
            (r <= cfg.ratio_threshold).then(|| TentativeCorrespondence {
                feat1: MatchedFeature::of(i, &feats1[i]),
                feat2: MatchedFeature::of(nb[0].index, &feats2[nb[0].index]),
                distance_ratio: r,
                prune_count: 0,
            })
        })
        .collect())
}

/// Matches every feature of `feats1` into `feats2` with the strategy in `cfg`.
pub fn match_features(
    feats1: &[DescribedFeature],
    feats2: &[DescribedFeature],
    cfg: &MatchingConfig,
) -> Result<Vec<TentativeCorrespondence>, MatchError> {
    match_with(feats1, feats2, cfg, None)
}

/// [`match_features`] against a prebuilt index of `feats2`.
pub fn match_features_indexed(
    feats1: &[DescribedFeature],
    feats2: &[DescribedFeature],
    index: &DescriptorIndex,
    cfg: &MatchingConfig,
) -> Result<Vec<TentativeCorrespondence>, MatchError> {
    match_with(feats1, feats2, cfg, Some(index))
}

/// First-to-first-geometrically-inconsistent ratio matching.
pub fn match_fginn(
    feats1: &[DescribedFeature],
    feats2: &[DescribedFeature],
    cfg: &MatchingConfig,
) -> Result<Vec<TentativeCorrespondence>, MatchError> {
    match_features(feats1, feats2, &MatchingConfig { strategy: MatchStrategy::Fginn, ..cfg.clone() })
}

/// First-to-second nearest ratio matching.
pub fn match_snn(
    feats1: &[DescribedFeature],
    feats2: &[DescribedFeature],
    cfg: &MatchingConfig,
) -> Result<Vec<TentativeCorrespondence>, MatchError> {
    match_features(feats1, feats2, &MatchingConfig { strategy: MatchStrategy::Snn, ..cfg.clone() })
}

/// Collapses correspondences whose endpoints are within `radius` in both
/// images. Survivors are chosen greedily by ascending ratio (ties: lower
/// index), each absorbing the remaining duplicates of itself; the survivor's
/// prune count grows by the number absorbed. Output keeps input order.
pub fn filter_duplicates(tcs: &[TentativeCorrespondence], radius: f64) -> Vec<TentativeCorrespondence> {
    let mut order: Vec<usize> = (0..tcs.len()).collect();
    order.sort_by(|&a, &b| tcs[a].distance_ratio.total_cmp(&tcs[b].distance_ratio).then(a.cmp(&b)));
    // spatial hash over image-1 positions with cells of side `radius`
    let cell = radius.max(1e-9);
    let key = |tc: &TentativeCorrespondence| {
        let c = tc.feat1.center();
        ((c.x / cell).floor() as i64, (c.y / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, tc) in tcs.iter().enumerate() {
        grid.entry(key(tc)).or_default().push(i);
    }
    let mut taken = vec![false; tcs.len()];
    let mut survivor = vec![false; tcs.len()];
    let mut pruned = vec![0usize; tcs.len()];
    for &s in &order {
        if taken[s] {
            continue;
        }
        survivor[s] = true;
        taken[s] = true;
        let (gx, gy) = key(&tcs[s]);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = grid.get(&(gx + dx, gy + dy)) else { continue };
                for &o in bucket {
                    if taken[o] {
                        continue;
                    }
                    let near1 = (tcs[o].feat1.center() - tcs[s].feat1.center()).norm() <= radius;
                    let near2 = (tcs[o].feat2.center() - tcs[s].feat2.center()).norm() <= radius;
                    if near1 && near2 {
                        taken[o] = true;
                        pruned[s] += 1;
                    }
                }
            }
        }
    }
    tcs.iter()
        .enumerate()
        .filter(|(i, _)| survivor[*i])
        .map(|(i, tc)| TentativeCorrespondence { prune_count: tc.prune_count + pruned[i], ..*tc })
        .collect()
}
