//! End-to-end flow estimation: pillarize, vote, extract one translation per
//! pillar or per connected pillar cluster, hand it to every member point and
//! gate near-static results to zero.

use alloc::format;
use alloc::vec::Vec;

use crate::cloud::{FlowField, PointCloud, Vec3, DEFAULT_FRAME_INTERVAL};
use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::pillar::{pillarize, GridConfig, PillarGrid};
use crate::spatial::SpatialIndex;
use crate::voting::{
    argmax_translation, soft_argmax_translation, VoteConfig, VoteTable, VotingSpace,
};

/// How a translation is read off a voting space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extraction {
    Argmax,
    #[default]
    SoftArgmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub vote: VoteConfig,
    pub extraction: Extraction,
    /// Fuse voting spaces over 8-connected pillar clusters before extraction.
    pub cluster_fusion: bool,
    /// Flows shorter than this (meters per frame) are zeroed.
    pub static_gate: f64,
    pub frame_interval: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(GridConfig::default())
    }
}

impl PipelineConfig {
    /// Defaults on top of `grid`: vote bins inherit the pillar size, soft-argmax,
    /// cluster fusion on, 0.04 m static gate (0.4 m/s at 10 Hz).
    pub fn new(grid: GridConfig) -> Self {
        Self {
            grid,
            vote: VoteConfig::new(grid.cell_size()),
            extraction: Extraction::SoftArgmax,
            cluster_fusion: true,
            static_gate: 0.04,
            frame_interval: DEFAULT_FRAME_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vote.geometry()?;
        if self.vote.cell != self.grid.cell_size() {
            return Err(Error::InvalidConfig(format!(
                "vote bins {:?} must match the pillar size {:?}",
                self.vote.cell,
                self.grid.cell_size()
            )));
        }
        if !(self.static_gate >= 0.0 && self.static_gate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "static gate must be >= 0, got {}",
                self.static_gate
            )));
        }
        if !(self.frame_interval > 0.0 && self.frame_interval.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "frame interval must be > 0, got {}",
                self.frame_interval
            )));
        }
        Ok(())
    }
}

/// Connected components of occupied cells under 8-connectivity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet {
    labels: Vec<u32>,
    start: Vec<u32>,
    members: Vec<u32>,
}

impl ClusterSet {
    /// Number of clusters.
    pub fn len(&self) -> usize {
        self.start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cluster id of every occupied pillar.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, pillar: usize) -> usize {
        self.labels[pillar] as usize
    }

    /// Pillars of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> &[u32] {
        &self.members[self.start[c] as usize..self.start[c + 1] as usize]
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Labels 8-connected pillar clusters. Ids follow the order of each cluster's
/// smallest cell index.
pub fn cluster_pillars(grid: &PillarGrid) -> ClusterSet {
    let n = grid.len();
    let cfg = grid.config();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    for k in 0..n {
        let (ix, iy) = cfg.coords(grid.cell(k));
        // Half of the 8-neighbourhood suffices: the rest is seen from the other side.
        for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
            let (nx, ny) = (ix as i64 + dx, iy as i64 + dy);
            if nx < 0 || ny < 0 || nx >= cfg.width() as i64 || ny >= cfg.height() as i64 {
                continue;
            }
            if let Some(j) = grid.find(cfg.key(nx as u32, ny as u32)) {
                let (a, b) = (find(&mut parent, k as u32), find(&mut parent, j as u32));
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi as usize] = lo;
                }
            }
        }
    }
    let mut labels = alloc::vec![u32::MAX; n];
    let mut root_label = alloc::vec![u32::MAX; n];
    let mut count = 0u32;
    for k in 0..n {
        let r = find(&mut parent, k as u32) as usize;
        if root_label[r] == u32::MAX {
            root_label[r] = count;
            count += 1;
        }
        labels[k] = root_label[r];
    }
    let mut start = alloc::vec![0u32; count as usize + 1];
    for &l in &labels {
        start[l as usize + 1] += 1;
    }
    for c in 0..count as usize {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut members = alloc::vec![0u32; n];
    for (k, &l) in labels.iter().enumerate() {
        members[fill[l as usize] as usize] = k as u32;
        fill[l as usize] += 1;
    }
    ClusterSet {
        labels,
        start,
        members,
    }
}

/// Zeroes every flow vector shorter than `threshold`.
pub fn static_gate(flow: &mut FlowField, threshold: f64) {
    for f in flow.flows_mut() {
        if math::norm3(*f) < threshold {
            *f = [0.0; 3];
        }
    }
}

/// All state needed to vote on one scan pair.
#[derive(Debug, Clone)]
pub struct SceneFlowEstimator {
    cfg: PipelineConfig,
    src: PillarGrid,
    tgt: PillarGrid,
    src_index: SpatialIndex,
    tgt_index: SpatialIndex,
    clusters: ClusterSet,
    votes: VoteTable,
}

impl SceneFlowEstimator {
    pub fn new(src: &PointCloud, tgt: &PointCloud, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Self::from_grids(pillarize(src, &cfg.grid), pillarize(tgt, &cfg.grid), cfg)
    }

    /// Starts from ready-made grids, e.g. with external features applied.
    pub fn from_grids(src: PillarGrid, tgt: PillarGrid, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if src.config() != &cfg.grid || tgt.config() != &cfg.grid {
            return Err(Error::Contract("grids were built with a different grid config".into()));
        }
        let src_index = SpatialIndex::build(&src);
        let tgt_index = SpatialIndex::build(&tgt);
        let votes = VoteTable::build(&src, &tgt, &src_index, &tgt_index, &cfg.vote)?;
        let clusters = cluster_pillars(&src);
        Ok(Self {
            cfg: *cfg,
            src,
            tgt,
            src_index,
            tgt_index,
            clusters,
            votes,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn source_grid(&self) -> &PillarGrid {
        &self.src
    }

    pub fn target_grid(&self) -> &PillarGrid {
        &self.tgt
    }

    pub fn source_index(&self) -> &SpatialIndex {
        &self.src_index
    }

    pub fn target_index(&self) -> &SpatialIndex {
        &self.tgt_index
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn vote_table(&self) -> &VoteTable {
        &self.votes
    }

    pub fn voting_space(&self, pillar: usize) -> VotingSpace {
        self.votes.voting_space(pillar)
    }

    /// Sum of the member pillars' spaces, in ascending pillar order. The
    /// pipeline extracts from this divided by the member count.
    pub fn cluster_voting_space(&self, cluster: usize) -> VotingSpace {
        let mut scratch = VotingSpace::zeros(*self.votes.geometry());
        self.fuse_cluster(cluster, &mut scratch)
    }

    fn fuse_cluster(&self, cluster: usize, scratch: &mut VotingSpace) -> VotingSpace {
        let mut fused = VotingSpace::zeros(*self.votes.geometry());
        for &k in self.clusters.members(cluster) {
            let one = scratch.scores_mut();
            one.fill(0.0);
            self.votes.accumulate_into(k as usize, one);
            for (f, s) in fused.scores_mut().iter_mut().zip(one.iter()) {
                *f += s;
            }
        }
        fused
    }

    fn extract(&self, space: &VotingSpace) -> [f64; 2] {
        match self.cfg.extraction {
            Extraction::Argmax => argmax_translation(space),
            Extraction::SoftArgmax => soft_argmax_translation(space, self.cfg.vote.temperature)
                .expect("temperature validated"),
        }
    }

    /// Planar translation of every occupied source pillar.
    pub fn pillar_translations(&self) -> Vec<[f64; 2]> {
        let geometry = *self.votes.geometry();
        if self.cfg.cluster_fusion {
            let per_cluster = par::map_indices_with(
                self.clusters.len(),
                || VotingSpace::zeros(geometry),
                |scratch, c| {
                    // Extract from the member mean: same argmax as the sum,
                    // and the temperature keeps its per-pillar meaning.
                    let mut fused = self.fuse_cluster(c, scratch);
                    let k = self.clusters.members(c).len() as f64;
                    fused.scores_mut().iter_mut().for_each(|v| *v /= k);
                    self.extract(&fused)
                },
            );
            (0..self.src.len())
                .map(|k| per_cluster[self.clusters.label(k)])
                .collect()
        } else {
            par::map_indices_with(
                self.src.len(),
                || VotingSpace::zeros(geometry),
                |space, k| {
                    let scores = space.scores_mut();
                    scores.fill(0.0);
                    self.votes.accumulate_into(k, scores);
                    self.extract(space)
                },
            )
        }
    }

    /// Per-point flow from per-pillar translations: `dz = 0`, zero for points
    /// outside the grid, then the static gate.
    pub fn assemble(&self, translations: &[[f64; 2]]) -> Result<FlowField> {
        if translations.len() != self.src.len() {
            return Err(Error::length_mismatch("pillar translations", self.src.len(), translations.len()));
        }
        let flows: Vec<Vec3> = (0..self.src.point_count())
            .map(|i| match self.src.pillar_of_point(i) {
                Some(k) => [translations[k][0], translations[k][1], 0.0],
                None => [0.0; 3],
            })
            .collect();
        let mut flow = FlowField::new(flows, self.cfg.frame_interval)?;
        static_gate(&mut flow, self.cfg.static_gate);
        Ok(flow)
    }

    pub fn estimate(&self) -> Result<FlowField> {
        self.assemble(&self.pillar_translations())
    }
}

/// Scene flow from `src` (time t) to `tgt` (time t + dt), one vector per
/// source point.
pub fn estimate_scene_flow(
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<FlowField> {
    SceneFlowEstimator::new(src, tgt, cfg)?.estimate()
}

/// For each cluster, the largest distance of a member point's flow from the
/// cluster's mean flow. Clusters come from `grid`, which must be the grid
/// of the cloud `flow` belongs to.
pub fn flow_consistency(flow: &FlowField, clusters: &ClusterSet, grid: &PillarGrid) -> Result<Vec<f64>> {
    check_alignment(flow, clusters, grid)?;
    Ok(cluster_means(flow, clusters, grid)
        .iter()
        .enumerate()
        .map(|(c, mean)| {
            clusters
                .members(c)
                .iter()
                .flat_map(|&k| grid.members(k as usize))
                .map(|&i| deviation(flow.flows()[i as usize], *mean))
                .fold(0.0, f64::max)
        })
        .collect())
}

pub(crate) fn check_alignment(flow: &FlowField, clusters: &ClusterSet, grid: &PillarGrid) -> Result<()> {
    if flow.len() != grid.point_count() {
        return Err(Error::length_mismatch("flow", grid.point_count(), flow.len()));
    }
    if clusters.labels().len() != grid.len() {
        return Err(Error::length_mismatch("cluster labels", grid.len(), clusters.labels().len()));
    }
    Ok(())
}

pub(crate) fn cluster_means(flow: &FlowField, clusters: &ClusterSet, grid: &PillarGrid) -> Vec<Vec3> {
    (0..clusters.len())
        .map(|c| {
            let mut sum = [0.0; 3];
            let mut n = 0usize;
            for &k in clusters.members(c) {
                for &i in grid.members(k as usize) {
                    let f = flow.flows()[i as usize];
                    for a in 0..3 {
                        sum[a] += f[a];
                    }
                    n += 1;
                }
            }
            let n = n.max(1) as f64;
            [sum[0] / n, sum[1] / n, sum[2] / n]
        })
        .collect()
}

#[inline]
pub(crate) fn deviation(f: Vec3, mean: Vec3) -> f64 {
    math::norm3([f[0] - mean[0], f[1] - mean[1], f[2] - mean[2]])
}
